"""Client for the federated back-end.

CRUD routes to the one server named by the domain in the object's URL —
registry membership is irrelevant for that, so any object can be fetched
by explicit URL. Discover fans out to every server in the registry,
forwarding channels and schema for server-side filtering, and merges the
streams; a server that is down contributes a warning, not a failure.
"""
from __future__ import annotations

import json
import os
from typing import Iterator, Optional
from urllib.parse import quote, urlsplit

import httpx

from ..api import (
    ChannelStat,
    Delta,
    Graffiti,
    ObjectBase,
    PullStream,
    Session,
    StreamWarning,
    check_discover_channels,
    decode_cursor,
    encode_cursor,
    system_clock,
)
from ..errors import (
    AuthFailedError,
    CursorExpiredError,
    GraffitiError,
    HomeUnavailableError,
    MalformedUrlError,
    NotAuthorizedError,
    NotFoundError,
    SessionRevokedError,
)
from ..model import GraffitiObject, Tombstone, parse_url
from ..schema import compile_schema, schema_doc

REGISTRY_ENV = "GRAFFITI_REGISTRY"
DEFAULT_REGISTRY_PATH = os.path.expanduser("~/.config/graffiti/registry")


def load_registry(path: Optional[str] = None) -> list[str]:
    """Read server origins, one per line; ``#`` starts a comment.

    The GRAFFITI_REGISTRY environment variable overrides the path.
    """
    path = os.environ.get(REGISTRY_ENV) or path or DEFAULT_REGISTRY_PATH
    origins = []
    if not os.path.exists(path):
        return origins
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line and line not in origins:
                origins.append(line)
    return origins


def _authority(origin: str) -> str:
    return urlsplit(origin).netloc


class RemoteClient(Graffiti):
    scheme = "remote"

    def __init__(
        self,
        registry: list[str],
        *,
        http: Optional[httpx.Client] = None,
        default_origin_scheme: str = "https",
        timeout: float = 10.0,
    ):
        if not registry:
            raise ValueError("registry must name at least one server")
        self.registry = list(dict.fromkeys(registry))
        self.http = http or httpx.Client(timeout=timeout)
        self.default_origin_scheme = default_origin_scheme
        self._by_authority = {_authority(o): o for o in self.registry}

    # -- accounts -------------------------------------------------------------

    def register(self, handle: str, secret: str, *, origin: Optional[str] = None,
                 invite: Optional[str] = None) -> str:
        origin = origin or self.registry[0]
        body = {"handle": handle, "secret": secret}
        if invite is not None:
            body["invite"] = invite
        resp = self._post(origin, "/register", body)
        if resp.status_code != 201:
            raise AuthFailedError(f"register failed: {resp.text}")
        return resp.json()["actor"]

    def login(self, handle: Optional[str] = None, *, secret: str = "",
              origin: Optional[str] = None, **kwargs) -> Session:
        origin = origin or self.registry[0]
        resp = self._post(origin, "/login", {"handle": handle, "secret": secret})
        if resp.status_code != 200:
            raise AuthFailedError("login failed")
        data = resp.json()
        return Session(
            actor=data["actor"], credential=data["token"],
            home=self.scheme, origin=origin,
        )

    def logout(self, session: Session) -> None:
        try:
            self.http.post(
                session.origin + "/logout",
                headers=self._headers(session, session.origin),
            )
        except httpx.HTTPError:
            pass  # logout is best-effort and idempotent

    # -- routing ----------------------------------------------------------------

    def origin_for_url(self, url: str) -> tuple[str, str]:
        """(origin, object id) for a remote object URL."""
        parsed = parse_url(url)
        if parsed.scheme != "remote":
            raise MalformedUrlError(f"not a remote object URL: {url}")
        authority, _, object_id = parsed.suffix.partition("/")
        origin = self._by_authority.get(
            authority, f"{self.default_origin_scheme}://{authority}"
        )
        return origin, object_id

    def _headers(self, session: Optional[Session], origin: str) -> dict:
        # bearer tokens are per-server: they only ever travel to the origin
        # that issued them; other servers are queried anonymously
        if session is None or session.origin != origin:
            return {}
        if not session.credential:
            raise SessionRevokedError("session has no credential")
        return {"Authorization": f"Bearer {session.credential}"}

    def _post(self, origin: str, path: str, body, session: Optional[Session] = None):
        try:
            return self.http.post(
                origin + path, json=body, headers=self._headers(session, origin)
            )
        except httpx.HTTPError as exc:
            raise HomeUnavailableError(f"{origin} unreachable: {exc}") from exc

    @staticmethod
    def _raise_for(resp, authed: bool = True) -> None:
        if resp.status_code == 404:
            raise NotFoundError(raw=resp.content)
        if resp.status_code == 401:
            if authed:
                raise SessionRevokedError("authentication failed")
            # we had no credential for that server, so we could never have
            # owned anything there
            raise NotAuthorizedError("no account on that server")
        if resp.status_code == 410:
            raise CursorExpiredError("cursor expired")
        if resp.status_code >= 400:
            raise GraffitiError(f"server error {resp.status_code}: {resp.text}")

    # -- CRUD ---------------------------------------------------------------------

    def put(self, base: ObjectBase, session: Session) -> GraffitiObject:
        base.checked()
        body = {"value": base.value, "channels": base.channels}
        if base.allowed is not None:
            body["allowed"] = base.allowed
        if base.url is None:
            resp = self._post(session.origin, "/objects", body, session)
            if resp.status_code != 201:
                self._raise_for(resp)
            return GraffitiObject.from_wire(resp.json())
        origin, object_id = self.origin_for_url(base.url)
        try:
            resp = self.http.put(
                f"{origin}/objects/{object_id}", json=body,
                headers=self._headers(session, origin),
            )
        except httpx.HTTPError as exc:
            raise HomeUnavailableError(f"{origin} unreachable: {exc}") from exc
        self._raise_for(resp, authed=origin == session.origin)
        return GraffitiObject.from_wire(resp.json())

    def get(self, url: str, schema, session: Optional[Session] = None) -> GraffitiObject:
        schema = schema_doc(schema)
        compile_schema(schema)  # fail fast, like local
        origin, object_id = self.origin_for_url(url)
        params = quote(json.dumps(schema, separators=(",", ":")), safe="")
        try:
            resp = self.http.get(
                f"{origin}/objects/{object_id}?schema={params}",
                headers=self._headers(session, origin),
            )
        except httpx.HTTPError as exc:
            raise HomeUnavailableError(f"{origin} unreachable: {exc}") from exc
        self._raise_for(resp, authed=session is not None and origin == session.origin)
        return GraffitiObject.from_wire(resp.json())

    def patch(self, url: str, ops: list[dict], session: Session) -> GraffitiObject:
        origin, object_id = self.origin_for_url(url)
        try:
            resp = self.http.patch(
                f"{origin}/objects/{object_id}", json=ops,
                headers=self._headers(session, origin),
            )
        except httpx.HTTPError as exc:
            raise HomeUnavailableError(f"{origin} unreachable: {exc}") from exc
        self._raise_for(resp, authed=origin == session.origin)
        return GraffitiObject.from_wire(resp.json())

    def delete(self, url: str, session: Session) -> None:
        origin, object_id = self.origin_for_url(url)
        try:
            resp = self.http.delete(
                f"{origin}/objects/{object_id}",
                headers=self._headers(session, origin),
            )
        except httpx.HTTPError as exc:
            raise HomeUnavailableError(f"{origin} unreachable: {exc}") from exc
        self._raise_for(resp, authed=origin == session.origin)

    # -- discovery -------------------------------------------------------------------

    def _stream_lines(self, origin: str, path: str, body, session) -> Iterator[dict]:
        with self.http.stream(
            "POST", origin + path, json=body,
            headers=self._headers(session, origin),
        ) as resp:
            if resp.status_code != 200:
                resp.read()
                self._raise_for(
                    resp, authed=session is not None and origin == session.origin
                )
            for line in resp.iter_lines():
                if line.strip():
                    yield json.loads(line)

    def discover(self, channels, schema, session: Optional[Session] = None) -> PullStream:
        channels = check_discover_channels(channels)
        schema = schema_doc(schema)
        compile_schema(schema)
        body = {"channels": channels, "schema": schema}

        def gen():
            seen: set[str] = set()
            cursors: dict[str, str] = {}
            for origin in self.registry:
                try:
                    for line in self._stream_lines(origin, "/discover", body, session):
                        kind = line.pop("type", None)
                        if kind == "object":
                            if line["url"] not in seen:
                                seen.add(line["url"])
                                yield GraffitiObject.from_wire(line)
                        elif kind == "cursor":
                            cursors[origin] = line["cursor"]
                        elif kind == "warning":
                            yield StreamWarning(origin, line.get("message", ""))
                except (httpx.HTTPError, HomeUnavailableError) as exc:
                    yield StreamWarning(origin, f"server unavailable: {exc}")
            return encode_cursor(
                {"v": 1, "impl": "remote-client", "at": system_clock(), "origins": cursors}
            )

        return PullStream(gen(), resume_fn=self.continue_discover)

    def continue_discover(self, cursor: str, session: Optional[Session] = None) -> PullStream:
        payload = decode_cursor(cursor)
        if payload.get("impl") != "remote-client":
            raise CursorExpiredError("cursor from a different implementation")
        origins = payload.get("origins", {})

        def gen():
            cursors: dict[str, str] = {}
            for origin, sub in origins.items():
                try:
                    for line in self._stream_lines(
                        origin, "/discover", {"cursor": sub}, session
                    ):
                        kind = line.pop("type", None)
                        if kind == "object":
                            yield Delta.for_object(GraffitiObject.from_wire(line))
                        elif kind == "tombstone":
                            yield Delta.for_tombstone(Tombstone.from_wire(line))
                        elif kind == "cursor":
                            cursors[origin] = line["cursor"]
                        elif kind == "warning":
                            yield StreamWarning(origin, line.get("message", ""))
                except httpx.HTTPError as exc:
                    yield StreamWarning(origin, f"server unavailable: {exc}")
            return encode_cursor(
                {"v": 1, "impl": "remote-client", "at": system_clock(), "origins": cursors}
            )

        return PullStream(gen(), resume_fn=self.continue_discover)

    # -- recovery ----------------------------------------------------------------------

    def recover_orphans(self, schema, session: Session) -> Iterator[GraffitiObject]:
        schema = schema_doc(schema)
        compile_schema(schema)
        for line in self._stream_lines(
            session.origin, "/recover-orphans", {"schema": schema}, session
        ):
            if line.pop("type", None) == "object":
                yield GraffitiObject.from_wire(line)

    def channel_stats(self, session: Session) -> Iterator[ChannelStat]:
        try:
            resp = self.http.get(
                session.origin + "/channel-stats",
                headers=self._headers(session, session.origin),
            )
        except httpx.HTTPError as exc:
            raise HomeUnavailableError(f"{session.origin} unreachable: {exc}") from exc
        self._raise_for(resp)
        for line in resp.text.splitlines():
            if line.strip():
                data = json.loads(line)
                if data.pop("type", None) == "stat":
                    yield ChannelStat(
                        channel=data["channel"],
                        count=data["count"],
                        last_modified=data["lastModified"],
                    )
