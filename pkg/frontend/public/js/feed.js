export function emptyFeed() {
    return { objects: new Map(), pending: new Map(), cursor: null, lastError: null };
}
function upsert(objects, incoming) {
    const current = objects.get(incoming.url);
    if (current === undefined || incoming.revision >= current.revision) {
        objects.set(incoming.url, incoming);
    }
}
export function reduceFeed(state, event) {
    switch (event.kind) {
        case "snapshot": {
            const objects = new Map();
            for (const obj of event.result.objects)
                upsert(objects, obj);
            return { ...state, objects, cursor: event.result.cursor, lastError: null };
        }
        case "delta": {
            const objects = new Map(state.objects);
            for (const obj of event.result.objects)
                upsert(objects, obj);
            for (const stone of event.result.tombstones)
                objects.delete(stone.url);
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
            if (echo)
                pending.set(event.tempId, { ...echo, failed: true });
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
/** Display order: server objects by published-then-revision, echoes last. */
export function feedEntries(state) {
    const published = (o) => typeof o.value["published"] === "number" ? o.value["published"] : 0;
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
//# sourceMappingURL=feed.js.map