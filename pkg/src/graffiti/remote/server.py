"""HTTP server daemon for the federated back-end.

One server is one authority in the federation: it stores objects whose
URLs carry its public origin, serves the wire protocol below, and never
talks to other servers. Accounts are handle+secret with short-lived
bearer tokens; the session stays opaque to applications.

Wire protocol (all JSON bodies):

    POST /register        {handle, secret}             -> 201 {actor}
    POST /login           {handle, secret}             -> 200 {token, actor, expiresAt}
    POST /logout          (Bearer)                     -> 204
    POST /objects         {value, channels, allowed?}  -> 201 object
    GET  /objects/<id>?schema=<urlencoded JSON>        -> 200 masked object | 404
    PUT  /objects/<id>    {value, channels, allowed?}  -> 200 object
    PATCH /objects/<id>   RFC 6902 ops                 -> 200 object
    DELETE /objects/<id>                               -> 204
    POST /discover        {channels, schema, cursor?}  -> NDJSON stream
    POST /recover-orphans {schema}  (Bearer)           -> NDJSON stream
    GET  /channel-stats             (Bearer)           -> NDJSON stream

The 404 body is byte-identical for objects that are missing, deleted, or
belong to someone else; auth failures are a uniform 401.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import secrets
import threading
import uuid
from dataclasses import dataclass
from typing import Optional
from urllib.parse import parse_qs

from ..api import (
    DEFAULT_RETENTION_MS,
    ObjectBase,
    check_discover_channels,
    decode_cursor,
    encode_cursor,
)
from ..errors import (
    CursorExpiredError,
    GraffitiError,
    NotAuthorizedError,
    NotFoundError,
    PatchError,
    SchemaCompileError,
    ShapeInvalidError,
)
from ..httpserve import ServiceHandle, serve_wsgi
from ..model import mask_object, visible_to
from ..schema import compile_schema
from ..store import ObjectStore

NOT_FOUND_BODY = b'{"error":"not_found"}'
AUTH_FAILED_BODY = b'{"error":"auth_failed"}'
CURSOR_EXPIRED_BODY = b'{"error":"cursor_expired"}'

_HANDLE_RE = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")

_STATUS = {
    200: "200 OK",
    201: "201 Created",
    204: "204 No Content",
    400: "400 Bad Request",
    401: "401 Unauthorized",
    403: "403 Forbidden",
    404: "404 Not Found",
    405: "405 Method Not Allowed",
    409: "409 Conflict",
    410: "410 Gone",
    500: "500 Internal Server Error",
}


@dataclass
class ServerConfig:
    listen_address: str = "127.0.0.1:0"
    public_origin: str = "localhost"  # authority embedded in issued URLs
    data_path: Optional[str] = None
    token_ttl: int = 24 * 3600  # seconds
    tombstone_retention: int = DEFAULT_RETENTION_MS // 1000  # seconds
    invite_code: Optional[str] = None
    secret_rounds: int = 60_000  # pbkdf2 iterations
    clock: Optional[object] = None  # callable returning unix ms


class _Request:
    def __init__(self, environ):
        self.method = environ["REQUEST_METHOD"].upper()
        self.path = environ.get("PATH_INFO", "/")
        self.query = parse_qs(environ.get("QUERY_STRING", ""))
        self.auth_header = environ.get("HTTP_AUTHORIZATION", "")
        try:
            length = int(environ.get("CONTENT_LENGTH") or 0)
        except ValueError:
            length = 0
        self.body = environ["wsgi.input"].read(length) if length else b""

    def json(self):
        if not self.body:
            return {}
        try:
            data = json.loads(self.body, parse_constant=_reject_constant)
        except ValueError as exc:
            raise _HttpError(400, f"invalid JSON body: {exc}") from exc
        return data


def _reject_constant(name):
    # NaN/Infinity are not JSON; storing them would poison NDJSON consumers
    raise ValueError(f"non-JSON constant {name}")


class _HttpError(Exception):
    def __init__(self, status: int, detail: str = "", body: Optional[bytes] = None):
        super().__init__(detail)
        self.status = status
        self.body = body if body is not None else _json_bytes(
            {"error": "bad_request", "detail": detail}
        )


def _json_bytes(data) -> bytes:
    return json.dumps(data, separators=(",", ":"), ensure_ascii=False).encode()


def _ndline(data) -> bytes:
    return _json_bytes(data) + b"\n"


class RemoteServer:
    """WSGI application implementing the per-server wire protocol."""

    def __init__(self, config: ServerConfig):
        self.config = config
        object_log = None
        self._accounts_path = None
        if config.data_path:
            os.makedirs(config.data_path, exist_ok=True)
            object_log = os.path.join(config.data_path, "objects.log")
            self._accounts_path = os.path.join(config.data_path, "accounts.json")
        self.store = ObjectStore(
            lambda: f"graffiti:remote:{config.public_origin}/{uuid.uuid4().hex}",
            path=object_log,
            clock=config.clock,
            retention_ms=config.tombstone_retention * 1000,
        )
        self.accounts: dict[str, dict] = {}
        self.tokens: dict[str, tuple[str, int]] = {}  # token -> (actor, expires ms)
        self._lock = threading.Lock()
        if self._accounts_path and os.path.exists(self._accounts_path):
            with open(self._accounts_path) as fh:
                self.accounts = json.load(fh)

    # -- account plumbing ---------------------------------------------------

    def _save_accounts(self) -> None:
        if not self._accounts_path:
            return
        tmp = self._accounts_path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(self.accounts, fh)
        os.replace(tmp, self._accounts_path)

    def _hash_secret(self, secret: str, salt: bytes) -> str:
        return hashlib.pbkdf2_hmac(
            "sha256", secret.encode(), salt, self.config.secret_rounds
        ).hex()

    def _actor_for(self, handle: str) -> str:
        return f"https://{self.config.public_origin}/a/{handle}"

    def _authenticate(self, req: _Request) -> Optional[str]:
        """Actor for the bearer token; None if absent; 401 if bad or expired."""
        header = req.auth_header
        if not header:
            return None
        if not header.startswith("Bearer "):
            raise _HttpError(401, body=AUTH_FAILED_BODY)
        token = header[len("Bearer "):].strip()
        with self._lock:
            entry = self.tokens.get(token)
            if entry is None or entry[1] <= self.store.clock():
                self.tokens.pop(token, None)
                raise _HttpError(401, body=AUTH_FAILED_BODY)
            return entry[0]

    def _require_actor(self, req: _Request) -> str:
        actor = self._authenticate(req)
        if actor is None:
            raise _HttpError(401, body=AUTH_FAILED_BODY)
        return actor

    # -- WSGI entry ----------------------------------------------------------

    def __call__(self, environ, start_response):
        req = _Request(environ)
        try:
            status, headers, body = self._route(req)
        except _HttpError as err:
            status = err.status
            headers = [("Content-Type", "application/json")]
            body = [err.body]
        except GraffitiError as err:
            status, headers, body = self._map_error(err)
        start_response(_STATUS[status], headers)
        return body

    def _map_error(self, err: GraffitiError):
        json_ct = [("Content-Type", "application/json")]
        if isinstance(err, (NotFoundError, NotAuthorizedError)):
            # forbidden is indistinguishable from missing, by design
            return 404, json_ct, [NOT_FOUND_BODY]
        if isinstance(err, CursorExpiredError):
            return 410, json_ct, [CURSOR_EXPIRED_BODY]
        if isinstance(err, (ShapeInvalidError, PatchError, SchemaCompileError)):
            return 400, json_ct, [_json_bytes({"error": "bad_request", "detail": str(err)})]
        return 500, json_ct, [_json_bytes({"error": "internal", "detail": str(err)})]

    def _route(self, req: _Request):
        path, method = req.path, req.method
        if path == "/register" and method == "POST":
            return self._register(req)
        if path == "/login" and method == "POST":
            return self._login(req)
        if path == "/logout" and method == "POST":
            return self._logout(req)
        if path == "/objects" and method == "POST":
            return self._create(req)
        m = re.fullmatch(r"/objects/([A-Za-z0-9_-]+)", path)
        if m:
            url = f"graffiti:remote:{self.config.public_origin}/{m.group(1)}"
            if method == "GET":
                return self._get(req, url)
            if method == "PUT":
                return self._replace(req, url)
            if method == "PATCH":
                return self._patch(req, url)
            if method == "DELETE":
                return self._delete(req, url)
            raise _HttpError(405, "method not allowed")
        if path == "/discover" and method == "POST":
            return self._discover(req)
        if path == "/recover-orphans" and method == "POST":
            return self._recover_orphans(req)
        if path == "/channel-stats" and method == "GET":
            return self._channel_stats(req)
        raise _HttpError(404, body=NOT_FOUND_BODY)

    # -- handlers -------------------------------------------------------------

    def _register(self, req: _Request):
        body = req.json()
        handle, secret = body.get("handle"), body.get("secret")
        if not isinstance(handle, str) or not _HANDLE_RE.match(handle):
            raise _HttpError(400, "handle must match [A-Za-z0-9_.-]{1,64}")
        if not isinstance(secret, str) or not secret:
            raise _HttpError(400, "secret required")
        if self.config.invite_code and body.get("invite") != self.config.invite_code:
            raise _HttpError(403, body=_json_bytes({"error": "invite_required"}))
        with self._lock:
            if handle in self.accounts:
                raise _HttpError(409, body=_json_bytes({"error": "handle_taken"}))
            salt = secrets.token_bytes(16)
            self.accounts[handle] = {
                "salt": salt.hex(),
                "hash": self._hash_secret(secret, salt),
                "actor": self._actor_for(handle),
            }
            self._save_accounts()
        return 201, [("Content-Type", "application/json")], [
            _json_bytes({"actor": self._actor_for(handle)})
        ]

    def _login(self, req: _Request):
        body = req.json()
        handle, secret = body.get("handle"), body.get("secret")
        account = self.accounts.get(handle) if isinstance(handle, str) else None
        if account is None or not isinstance(secret, str):
            raise _HttpError(401, body=AUTH_FAILED_BODY)
        if self._hash_secret(secret, bytes.fromhex(account["salt"])) != account["hash"]:
            raise _HttpError(401, body=AUTH_FAILED_BODY)
        token = secrets.token_urlsafe(24)
        expires = self.store.clock() + self.config.token_ttl * 1000
        with self._lock:
            self.tokens[token] = (account["actor"], expires)
        return 200, [("Content-Type", "application/json")], [
            _json_bytes({"token": token, "actor": account["actor"], "expiresAt": expires})
        ]

    def _logout(self, req: _Request):
        header = req.auth_header
        if header.startswith("Bearer "):
            with self._lock:
                self.tokens.pop(header[len("Bearer "):].strip(), None)
        return 204, [], []

    def _create(self, req: _Request):
        actor = self._require_actor(req)
        base = ObjectBase.from_wire(req.json())
        if base.url is not None:
            raise _HttpError(400, "POST /objects does not take a url; use PUT")
        obj = self.store.create(base, actor)
        return 201, [("Content-Type", "application/json")], [_json_bytes(obj.to_wire())]

    def _get(self, req: _Request, url: str):
        viewer = self._authenticate(req)
        raw_schema = req.query.get("schema", ["{}"])[0]
        try:
            schema = json.loads(raw_schema)
        except ValueError as exc:
            raise _HttpError(400, f"schema query param is not JSON: {exc}") from exc
        matcher = compile_schema(schema)
        obj = self.store.get(url)
        if obj is None or not visible_to(obj, viewer):
            raise NotFoundError()
        masked = mask_object(obj, viewer, [])
        if not matcher.matches(masked):
            raise NotFoundError()
        return 200, [("Content-Type", "application/json")], [_json_bytes(masked.to_wire())]

    def _replace(self, req: _Request, url: str):
        actor = self._require_actor(req)
        base = ObjectBase.from_wire(req.json())
        base.url = None  # path names the target; body url is ignored
        obj = self.store.replace(url, base, actor)
        return 200, [("Content-Type", "application/json")], [_json_bytes(obj.to_wire())]

    def _patch(self, req: _Request, url: str):
        actor = self._require_actor(req)
        ops = req.json()
        if not isinstance(ops, list):
            raise _HttpError(400, "PATCH body must be a JSON list of ops")
        obj = self.store.patch(url, ops, actor)
        return 200, [("Content-Type", "application/json")], [_json_bytes(obj.to_wire())]

    def _delete(self, req: _Request, url: str):
        actor = self._require_actor(req)
        self.store.delete(url, actor)
        return 204, [], []

    # -- streams ---------------------------------------------------------------

    def _cursor_payload(self, seq: int, channels, schema_doc) -> str:
        return encode_cursor(
            {
                "v": 1,
                "impl": "remote",
                "origin": self.config.public_origin,
                "seq": seq,
                "at": self.store.clock(),
                "channels": list(channels),
                "schema": schema_doc,
            }
        )

    def _check_cursor(self, token: str) -> dict:
        payload = decode_cursor(token)
        if payload.get("impl") != "remote" or payload.get("origin") != self.config.public_origin:
            raise CursorExpiredError("cursor was issued by a different server")
        age = self.store.clock() - payload.get("at", 0)
        if age > self.store.retention_ms or payload.get("seq", 0) < self.store.pruned_through:
            raise CursorExpiredError("cursor older than tombstone retention")
        return payload

    def _discover(self, req: _Request):
        viewer = self._authenticate(req)
        body = req.json()
        cursor = body.get("cursor")
        if cursor is not None:
            payload = self._check_cursor(cursor)
            channels = payload["channels"]
            matcher = compile_schema(payload["schema"])
            with self.store.lock:
                seq = self.store.seq
                deltas = self.store.deltas(payload["seq"], channels, matcher, viewer)
            lines = []
            for d in deltas:
                if d.kind == "object":
                    lines.append(_ndline({"type": "object", **d.object.to_wire()}))
                else:
                    lines.append(
                        _ndline(
                            {
                                "type": "tombstone",
                                "url": d.tombstone.url,
                                "deletedAt": d.tombstone.deleted_at,
                            }
                        )
                    )
        else:
            try:
                channels = check_discover_channels(body.get("channels"))
            except ValueError as exc:
                raise _HttpError(400, str(exc)) from exc
            matcher = compile_schema(body.get("schema", {}))
            with self.store.lock:
                seq = self.store.seq
                snapshot = self.store.snapshot(channels, matcher, viewer)
            lines = [_ndline({"type": "object", **o.to_wire()}) for o in snapshot]
        lines.append(
            _ndline({"type": "cursor", "cursor": self._cursor_payload(seq, channels, matcher.doc)})
        )
        return 200, [("Content-Type", "application/x-ndjson")], lines

    def _recover_orphans(self, req: _Request):
        actor = self._require_actor(req)
        matcher = compile_schema(req.json().get("schema", {}))
        lines = [
            _ndline({"type": "object", **obj.to_wire()})
            for obj in self.store.orphans(actor)
            if matcher.matches(obj)
        ]
        return 200, [("Content-Type", "application/x-ndjson")], lines

    def _channel_stats(self, req: _Request):
        actor = self._require_actor(req)
        lines = [
            _ndline({"type": "stat", **stat.to_wire()})
            for stat in self.store.channel_stats(actor)
        ]
        return 200, [("Content-Type", "application/x-ndjson")], lines

    def close(self) -> None:
        self.store.close()


def serve_remote(config: ServerConfig) -> ServiceHandle:
    """Bind the server's socket; call .serve_forever() or .start_background()."""
    return serve_wsgi(RemoteServer(config), config.listen_address)
