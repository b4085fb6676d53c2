/**
 * Typed client for the federation server wire protocol.
 *
 * Talks only to the documented endpoints: /register /login /logout
 * /objects(/<id>) /discover /recover-orphans /channel-stats. Discover
 * responses are NDJSON streams whose last line carries the continuation
 * cursor.
 */

export interface GraffitiObject {
  value: Record<string, unknown>;
  url: string;
  actor: string;
  channels: string[];
  allowed?: string[];
  revision: number;
}

export interface Tombstone {
  url: string;
  deletedAt: number;
}

export interface ObjectBase {
  value: Record<string, unknown>;
  channels: string[];
  allowed?: string[];
}

export type PatchOp = {
  op: "add" | "remove" | "replace";
  path: string;
  value?: unknown;
};

export type StreamLine =
  | ({ type: "object" } & GraffitiObject)
  | ({ type: "tombstone" } & Tombstone)
  | { type: "warning"; origin?: string; message?: string }
  | { type: "cursor"; cursor: string };

export interface StreamResult {
  objects: GraffitiObject[];
  tombstones: Tombstone[];
  warnings: string[];
  cursor: string | null;
}

export interface Session {
  actor: string;
  token: string;
}

export class WireError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message?: string,
  ) {
    super(message ?? `${status} ${code}`);
  }
}

export function parseNdjson(text: string): StreamLine[] {
  return text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as StreamLine);
}

export function collectStream(lines: StreamLine[]): StreamResult {
  const result: StreamResult = {
    objects: [],
    tombstones: [],
    warnings: [],
    cursor: null,
  };
  for (const line of lines) {
    if (line.type === "object") {
      const { type: _t, ...obj } = line;
      result.objects.push(obj as GraffitiObject);
    } else if (line.type === "tombstone") {
      result.tombstones.push({ url: line.url, deletedAt: line.deletedAt });
    } else if (line.type === "warning") {
      result.warnings.push(line.message ?? "unknown warning");
    } else if (line.type === "cursor") {
      result.cursor = line.cursor;
    }
  }
  return result;
}

/** Object id = opaque tail of "graffiti:remote:<authority>/<id>". */
export function objectId(url: string): string {
  const prefix = "graffiti:remote:";
  if (!url.startsWith(prefix)) throw new WireError(0, "bad_url", url);
  const slash = url.indexOf("/", prefix.length);
  if (slash < 0) throw new WireError(0, "bad_url", url);
  return url.slice(slash + 1);
}

export class RemoteWire {
  constructor(
    readonly origin: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private headers(token?: string): Record<string, string> {
    const out: Record<string, string> = { "content-type": "application/json" };
    if (token) out["authorization"] = `Bearer ${token}`;
    return out;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
    token?: string,
  ): Promise<Response> {
    const resp = await this.fetchImpl(`${this.origin}${path}`, {
      method,
      headers: this.headers(token),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let code = "error";
      try {
        code = ((await resp.json()) as { error?: string }).error ?? "error";
      } catch {
        /* non-JSON error body */
      }
      throw new WireError(resp.status, code);
    }
    return resp;
  }

  async register(handle: string, secret: string): Promise<string> {
    const resp = await this.request("POST", "/register", { handle, secret });
    return ((await resp.json()) as { actor: string }).actor;
  }

  async login(handle: string, secret: string): Promise<Session> {
    const resp = await this.request("POST", "/login", { handle, secret });
    const data = (await resp.json()) as { token: string; actor: string };
    return { actor: data.actor, token: data.token };
  }

  async logout(session: Session): Promise<void> {
    await this.request("POST", "/logout", undefined, session.token);
  }

  async put(session: Session, base: ObjectBase): Promise<GraffitiObject> {
    const resp = await this.request("POST", "/objects", base, session.token);
    return (await resp.json()) as GraffitiObject;
  }

  async replace(
    session: Session,
    url: string,
    base: ObjectBase,
  ): Promise<GraffitiObject> {
    const resp = await this.request(
      "PUT",
      `/objects/${objectId(url)}`,
      base,
      session.token,
    );
    return (await resp.json()) as GraffitiObject;
  }

  async patch(
    session: Session,
    url: string,
    ops: PatchOp[],
  ): Promise<GraffitiObject> {
    const resp = await this.request(
      "PATCH",
      `/objects/${objectId(url)}`,
      ops,
      session.token,
    );
    return (await resp.json()) as GraffitiObject;
  }

  async delete(session: Session, url: string): Promise<void> {
    await this.request("DELETE", `/objects/${objectId(url)}`, undefined, session.token);
  }

  async get(
    url: string,
    schema: Record<string, unknown> = {},
    session?: Session,
  ): Promise<GraffitiObject> {
    const params = encodeURIComponent(JSON.stringify(schema));
    const resp = await this.request(
      "GET",
      `/objects/${objectId(url)}?schema=${params}`,
      undefined,
      session?.token,
    );
    return (await resp.json()) as GraffitiObject;
  }

  async discover(
    channels: string[],
    schema: Record<string, unknown>,
    session?: Session,
  ): Promise<StreamResult> {
    const resp = await this.request(
      "POST",
      "/discover",
      { channels, schema },
      session?.token,
    );
    return collectStream(parseNdjson(await resp.text()));
  }

  async continueDiscover(
    cursor: string,
    session?: Session,
  ): Promise<StreamResult> {
    const resp = await this.request(
      "POST",
      "/discover",
      { cursor },
      session?.token,
    );
    return collectStream(parseNdjson(await resp.text()));
  }
}
