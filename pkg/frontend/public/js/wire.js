/**
 * Typed client for the federation server wire protocol.
 *
 * Talks only to the documented endpoints: /register /login /logout
 * /objects(/<id>) /discover /recover-orphans /channel-stats. Discover
 * responses are NDJSON streams whose last line carries the continuation
 * cursor.
 */
export class WireError extends Error {
    constructor(status, code, message) {
        super(message ?? `${status} ${code}`);
        this.status = status;
        this.code = code;
    }
}
export function parseNdjson(text) {
    return text
        .split("\n")
        .map((line) => line.trim())
        .filter((line) => line.length > 0)
        .map((line) => JSON.parse(line));
}
export function collectStream(lines) {
    const result = {
        objects: [],
        tombstones: [],
        warnings: [],
        cursor: null,
    };
    for (const line of lines) {
        if (line.type === "object") {
            const { type: _t, ...obj } = line;
            result.objects.push(obj);
        }
        else if (line.type === "tombstone") {
            result.tombstones.push({ url: line.url, deletedAt: line.deletedAt });
        }
        else if (line.type === "warning") {
            result.warnings.push(line.message ?? "unknown warning");
        }
        else if (line.type === "cursor") {
            result.cursor = line.cursor;
        }
    }
    return result;
}
/** Object id = opaque tail of "graffiti:remote:<authority>/<id>". */
export function objectId(url) {
    const prefix = "graffiti:remote:";
    if (!url.startsWith(prefix))
        throw new WireError(0, "bad_url", url);
    const slash = url.indexOf("/", prefix.length);
    if (slash < 0)
        throw new WireError(0, "bad_url", url);
    return url.slice(slash + 1);
}
export class RemoteWire {
    constructor(origin, fetchImpl = fetch) {
        this.origin = origin;
        this.fetchImpl = fetchImpl;
    }
    headers(token) {
        const out = { "content-type": "application/json" };
        if (token)
            out["authorization"] = `Bearer ${token}`;
        return out;
    }
    async request(method, path, body, token) {
        const resp = await this.fetchImpl(`${this.origin}${path}`, {
            method,
            headers: this.headers(token),
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!resp.ok) {
            let code = "error";
            try {
                code = (await resp.json()).error ?? "error";
            }
            catch {
                /* non-JSON error body */
            }
            throw new WireError(resp.status, code);
        }
        return resp;
    }
    async register(handle, secret) {
        const resp = await this.request("POST", "/register", { handle, secret });
        return (await resp.json()).actor;
    }
    async login(handle, secret) {
        const resp = await this.request("POST", "/login", { handle, secret });
        const data = (await resp.json());
        return { actor: data.actor, token: data.token };
    }
    async logout(session) {
        await this.request("POST", "/logout", undefined, session.token);
    }
    async put(session, base) {
        const resp = await this.request("POST", "/objects", base, session.token);
        return (await resp.json());
    }
    async replace(session, url, base) {
        const resp = await this.request("PUT", `/objects/${objectId(url)}`, base, session.token);
        return (await resp.json());
    }
    async patch(session, url, ops) {
        const resp = await this.request("PATCH", `/objects/${objectId(url)}`, ops, session.token);
        return (await resp.json());
    }
    async delete(session, url) {
        await this.request("DELETE", `/objects/${objectId(url)}`, undefined, session.token);
    }
    async get(url, schema = {}, session) {
        const params = encodeURIComponent(JSON.stringify(schema));
        const resp = await this.request("GET", `/objects/${objectId(url)}?schema=${params}`, undefined, session?.token);
        return (await resp.json());
    }
    async discover(channels, schema, session) {
        const resp = await this.request("POST", "/discover", { channels, schema }, session?.token);
        return collectStream(parseNdjson(await resp.text()));
    }
    async continueDiscover(cursor, session) {
        const resp = await this.request("POST", "/discover", { cursor }, session?.token);
        return collectStream(parseNdjson(await resp.text()));
    }
}
//# sourceMappingURL=wire.js.map