/**
 * Pure feed state: everything on screen is derivable from (objects,
 * tombstones, pending echoes), so the delta-application logic runs and
 * tests headlessly. Mutating events return a new state.
 */
import type { GraffitiObject, StreamResult } from "./wire.js";

export interface PendingEcho {
  tempId: string;
  value: Record<string, unknown>;
  actor: string;
  channels: string[];
  failed: boolean;
}

export interface FeedState {
  objects: ReadonlyMap<string, GraffitiObject>;
  pending: ReadonlyMap<string, PendingEcho>;
  cursor: string | null;
  lastError: string | null;
}

export type FeedEvent =
  | { kind: "snapshot"; result: StreamResult }
  | { kind: "delta"; result: StreamResult }
  | { kind: "echo"; echo: PendingEcho }
  | { kind: "ack"; tempId: string; object: GraffitiObject }
  | { kind: "echo-failed"; tempId: string }
  | { kind: "connection-lost"; message: string }
  | { kind: "connection-restored" }
  | { kind: "reset" };

export function emptyFeed(): FeedState {
  return { objects: new Map(), pending: new Map(), cursor: null, lastError: null };
}

function upsert(
  objects: Map<string, GraffitiObject>,
  incoming: GraffitiObject,
): void {
  const current = objects.get(incoming.url);
  if (current === undefined || incoming.revision >= current.revision) {
    objects.set(incoming.url, incoming);
  }
}

export function reduceFeed(state: FeedState, event: FeedEvent): FeedState {
  switch (event.kind) {
    case "snapshot": {
      const objects = new Map<string, GraffitiObject>();
      for (const obj of event.result.objects) upsert(objects, obj);
      return { ...state, objects, cursor: event.result.cursor, lastError: null };
    }
    case "delta": {
      const objects = new Map(state.objects);
      for (const obj of event.result.objects) upsert(objects, obj);
      for (const stone of event.result.tombstones) objects.delete(stone.url);
      return {
        ...state,
        objects,
        cursor: event.result.cursor ?? state.cursor,
        lastError: null,
      };
    }
    case "echo": {
      const pending = new Map(state.pending);
      pending.set(event.echo.tempId, event.echo);
      return { ...state, pending };
    }
    case "ack": {
      const pending = new Map(state.pending);
      pending.delete(event.tempId);
      const objects = new Map(state.objects);
      upsert(objects, event.object);
      return { ...state, pending, objects };
    }
    case "echo-failed": {
      const pending = new Map(state.pending);
      const echo = pending.get(event.tempId);
      if (echo) pending.set(event.tempId, { ...echo, failed: true });
      return { ...state, pending };
    }
    case "connection-lost":
      // drafts and optimistic echoes survive; only the banner changes
      return { ...state, lastError: event.message };
    case "connection-restored":
      return { ...state, lastError: null };
    case "reset":
      return emptyFeed();
  }
}

export interface FeedEntry {
  key: string;
  value: Record<string, unknown>;
  actor: string;
  pending: boolean;
  failed: boolean;
  url?: string;
  revision?: number;
}

/** Display order: server objects by published-then-revision, echoes last. */
export function feedEntries(state: FeedState): FeedEntry[] {
  const published = (o: GraffitiObject): number =>
    typeof o.value["published"] === "number" ? (o.value["published"] as number) : 0;
  const settled = [...state.objects.values()]
    .sort((a, b) => published(a) - published(b) || a.url.localeCompare(b.url))
    .map((o) => ({
      key: o.url,
      value: o.value,
      actor: o.actor,
      pending: false,
      failed: false,
      url: o.url,
      revision: o.revision,
    }));
  const echoes = [...state.pending.values()].map((e) => ({
    key: e.tempId,
    value: e.value,
    actor: e.actor,
    pending: true,
    failed: e.failed,
  }));
  return [...settled, ...echoes];
}
