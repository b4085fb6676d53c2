"""Scheme-routing meta-implementation.

One router holds at most one implementation per URL scheme. CRUD routes
to exactly one back-end by the object URL's scheme; discovery fans out
to all of them and merges the streams, deduplicating by URL (URLs embed
their scheme, so cross-implementation collisions cannot happen). A first
put, where no URL exists yet, resolves its destination in a fixed order:
explicit per-call choice, then the session's own binding, then the
configured default.
"""
from __future__ import annotations

import json
import os
from typing import Iterator, Optional

import httpx

from .api import (
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
from .errors import (
    CursorExpiredError,
    GraffitiError,
    SchemeConflictError,
    SessionRevokedError,
    UnknownSchemeError,
)
from .model import GraffitiObject, parse_url
from .schema import compile_schema, schema_doc

CONFIG_ENV = "GRAFFITI_CONFIG"


class MetaGraffiti(Graffiti):
    scheme = "meta"

    def __init__(self, default_scheme: str = "local"):
        self.bindings: dict[str, Graffiti] = {}
        self.default_scheme = default_scheme

    # -- wiring --------------------------------------------------------------

    def register_implementation(self, scheme: str, impl: Graffiti) -> None:
        if scheme in self.bindings:
            raise SchemeConflictError(f"scheme {scheme!r} is already bound")
        self.bindings[scheme] = impl

    def _for_scheme(self, scheme: str) -> Graffiti:
        impl = self.bindings.get(scheme)
        if impl is None:
            raise UnknownSchemeError(f"no implementation bound for {scheme!r}")
        return impl

    def _for_url(self, url: str) -> Graffiti:
        return self._for_scheme(parse_url(url).scheme)

    def _for_session(self, session: Session) -> Graffiti:
        return self._for_scheme(session.home)

    # -- sessions --------------------------------------------------------------

    def login(self, handle: Optional[str] = None, *, home: Optional[str] = None,
              **kwargs) -> Session:
        return self._for_scheme(home or self.default_scheme).login(handle, **kwargs)

    def logout(self, session: Session) -> None:
        self._for_session(session).logout(session)

    # -- CRUD --------------------------------------------------------------------

    def put(self, base: ObjectBase, session: Session,
            scheme: Optional[str] = None) -> GraffitiObject:
        if base.url is not None:
            return self._for_url(base.url).put(base, session)
        target = scheme or session.home or self.default_scheme
        return self._for_scheme(target).put(base, session)

    def get(self, url: str, schema, session: Optional[Session] = None) -> GraffitiObject:
        return self._for_url(url).get(url, schema, session)

    def patch(self, url: str, ops: list[dict], session: Session) -> GraffitiObject:
        return self._for_url(url).patch(url, ops, session)

    def delete(self, url: str, session: Session) -> None:
        self._for_url(url).delete(url, session)

    # -- fan-out ---------------------------------------------------------------------

    def _session_for(self, scheme: str, session: Optional[Session]) -> Optional[Session]:
        # sessions are bound to the implementation that issued them
        if session is not None and session.home == scheme:
            return session
        return None

    def discover(self, channels, schema, session: Optional[Session] = None) -> PullStream:
        check_discover_channels(channels)
        schema = schema_doc(schema)
        compile_schema(schema)
        if not self.bindings:
            raise UnknownSchemeError("no implementations bound")

        def gen():
            seen: set[str] = set()
            cursors: dict[str, str] = {}
            for scheme, impl in self.bindings.items():
                sub = impl.discover(channels, schema, self._session_for(scheme, session))
                for obj in sub:
                    if obj.url not in seen:
                        seen.add(obj.url)
                        yield obj
                for w in sub.warnings:
                    yield StreamWarning(w.origin or scheme, w.message)
                if sub.cursor is not None:
                    cursors[scheme] = sub.cursor
            return encode_cursor(
                {"v": 1, "impl": "meta", "at": system_clock(), "schemes": cursors}
            )

        return PullStream(gen(), resume_fn=self.continue_discover)

    def continue_discover(self, cursor: str, session: Optional[Session] = None) -> PullStream:
        payload = decode_cursor(cursor)
        if payload.get("impl") != "meta":
            raise CursorExpiredError("cursor from a different implementation")
        subs = payload.get("schemes", {})

        def gen():
            cursors: dict[str, str] = {}
            for scheme, sub_cursor in subs.items():
                impl = self._for_scheme(scheme)
                # a CursorExpired below surfaces for the whole composite
                stream = impl.continue_discover(
                    sub_cursor, self._session_for(scheme, session)
                )
                yield from stream
                if stream.cursor is not None:
                    cursors[scheme] = stream.cursor
            return encode_cursor(
                {"v": 1, "impl": "meta", "at": system_clock(), "schemes": cursors}
            )

        return PullStream(gen(), resume_fn=self.continue_discover)

    def recover_orphans(self, schema, session: Session) -> Iterator[GraffitiObject]:
        for scheme, impl in self.bindings.items():
            bound = self._session_for(scheme, session)
            if bound is None:
                continue  # v1: a session recovers objects from its own back-end
            yield from impl.recover_orphans(schema, bound)

    def channel_stats(self, session: Session) -> Iterator[ChannelStat]:
        for scheme, impl in self.bindings.items():
            bound = self._session_for(scheme, session)
            if bound is None:
                continue
            yield from impl.channel_stats(bound)


def load_config(path: Optional[str] = None) -> dict:
    path = os.environ.get(CONFIG_ENV) or path
    if not path or not os.path.exists(path):
        return {}
    with open(path) as fh:
        return json.load(fh)


def build_from_config(path: Optional[str] = None, *,
                      http: Optional[httpx.Client] = None) -> MetaGraffiti:
    """Assemble a router from a JSON config file.

    Shape: {"default_scheme": "...", "local": {"path": "..."},
    "remote": {"registry": [...]}, "cs": {"tracker": "...",
    "storage": {"kind": "fs"|"http", ...}}}. GRAFFITI_CONFIG overrides
    the path. With no config at all you get an in-memory local store.
    """
    from .local import LocalGraffiti
    from .remote.client import RemoteClient, load_registry

    config = load_config(path)
    router = MetaGraffiti(default_scheme=config.get("default_scheme", "local"))

    local_conf = config.get("local", {})
    data_home = os.environ.get("XDG_DATA_HOME") or os.path.expanduser("~/.local/share")
    local_path = local_conf.get("path", os.path.join(data_home, "graffiti", "local.db"))
    router.register_implementation("local", LocalGraffiti(local_path))

    remote_conf = config.get("remote")
    if remote_conf is not None:
        registry = remote_conf.get("registry") or load_registry()
        if registry:
            router.register_implementation(
                "remote", RemoteClient(registry, http=http)
            )

    cs_conf = config.get("cs")
    if cs_conf is not None and cs_conf.get("tracker"):
        from .commodity import CommodityClient, FileSystemStorage, HttpStorage

        storage = cs_conf.get("storage", {})
        kind = storage.get("kind", "fs")
        if kind == "fs":
            root = storage.get("root", os.path.expanduser("~/.local/share/graffiti/blobs"))

            def factory(handle: str):
                return FileSystemStorage(os.path.join(root, handle))
        elif kind == "http":
            base = storage["base_url"]

            def factory(handle: str):
                return HttpStorage(f"{base.rstrip('/')}/{handle}", http=http)
        else:
            raise GraffitiError(f"unknown cs storage kind {kind!r}")
        router.register_implementation(
            "cs", CommodityClient(cs_conf["tracker"], factory, http=http)
        )
    return router
