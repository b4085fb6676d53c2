"""Single-process reference implementation over the embedded store.

Serves the ``graffiti:local:`` scheme. Login accepts any handle with no
credentials, so applications can be tried without an account; data stays
on the device that created it. With a path, state persists across
reopen; without one the store is ephemeral.
"""
from __future__ import annotations

import secrets
import uuid
from typing import Iterator, Optional

from .api import (
    DEFAULT_RETENTION_MS,
    ChannelStat,
    Graffiti,
    ObjectBase,
    PullStream,
    Session,
    check_discover_channels,
    decode_cursor,
    encode_cursor,
)
from .errors import CursorExpiredError, NotFoundError, SessionRevokedError
from .model import GraffitiObject, mask_object, visible_to
from .schema import CompiledMatcher, compile_schema
from .store import ObjectStore


def _as_matcher(schema) -> CompiledMatcher:
    if isinstance(schema, CompiledMatcher):
        return schema
    return compile_schema(schema if schema is not None else {})


class LocalGraffiti(Graffiti):
    scheme = "local"

    def __init__(self, path: Optional[str] = None, *, clock=None,
                 retention_ms: int = DEFAULT_RETENTION_MS):
        self.store = ObjectStore(
            lambda: f"graffiti:local:{uuid.uuid4().hex}",
            path=path,
            clock=clock,
            retention_ms=retention_ms,
        )
        self._active: dict[str, str] = {}  # credential -> actor

    # -- sessions ------------------------------------------------------------

    def login(self, handle: Optional[str] = None, **kwargs) -> Session:
        handle = handle or f"anon-{secrets.token_hex(4)}"
        actor = f"graffiti:local:actor/{handle}"
        credential = secrets.token_urlsafe(16)
        self._active[credential] = actor
        return Session(actor=actor, credential=credential, home=self.scheme)

    def logout(self, session: Session) -> None:
        self._active.pop(session.credential, None)

    def _viewer(self, session: Optional[Session]) -> Optional[str]:
        if session is None:
            return None
        if self._active.get(session.credential) != session.actor:
            raise SessionRevokedError("session is not active")
        return session.actor

    def _require(self, session: Session) -> str:
        viewer = self._viewer(session)
        if viewer is None:
            raise SessionRevokedError("session required")
        return viewer

    # -- CRUD ----------------------------------------------------------------

    def put(self, base: ObjectBase, session: Session) -> GraffitiObject:
        actor = self._require(session)
        if base.url is None:
            return self.store.create(base, actor)
        return self.store.replace(base.url, base, actor)

    def get(self, url: str, schema, session: Optional[Session] = None) -> GraffitiObject:
        viewer = self._viewer(session)
        matcher = _as_matcher(schema)
        obj = self.store.get(url)
        if obj is None or not visible_to(obj, viewer):
            raise NotFoundError()
        masked = mask_object(obj, viewer, [])
        if not matcher.matches(masked):
            raise NotFoundError()
        return masked

    def patch(self, url: str, ops: list[dict], session: Session) -> GraffitiObject:
        actor = self._require(session)
        return self.store.patch(url, ops, actor)

    def delete(self, url: str, session: Session) -> None:
        actor = self._require(session)
        self.store.delete(url, actor)

    # -- discovery -----------------------------------------------------------

    def discover(self, channels, schema, session: Optional[Session] = None) -> PullStream:
        viewer = self._viewer(session)
        channels = check_discover_channels(channels)
        matcher = _as_matcher(schema)

        def gen():
            with self.store.lock:
                seq = self.store.seq
                snapshot = self.store.snapshot(channels, matcher, viewer)
            yield from snapshot
            return self._make_cursor(seq, channels, matcher.doc)

        return PullStream(gen(), resume_fn=self.continue_discover)

    def continue_discover(self, cursor: str, session: Optional[Session] = None) -> PullStream:
        viewer = self._viewer(session)
        payload = self._check_cursor(cursor)
        channels = payload["channels"]
        matcher = _as_matcher(payload["schema"])

        def gen():
            with self.store.lock:
                seq = self.store.seq
                deltas = self.store.deltas(payload["seq"], channels, matcher, viewer)
            yield from deltas
            return self._make_cursor(seq, channels, matcher.doc)

        return PullStream(gen(), resume_fn=self.continue_discover)

    def _make_cursor(self, seq: int, channels, schema_doc) -> str:
        return encode_cursor(
            {
                "v": 1,
                "impl": "local",
                "seq": seq,
                "at": self.store.clock(),
                "channels": list(channels),
                "schema": schema_doc,
            }
        )

    def _check_cursor(self, cursor: str) -> dict:
        payload = decode_cursor(cursor)
        if payload.get("impl") != "local" or "seq" not in payload:
            raise CursorExpiredError("cursor from a different implementation")
        age = self.store.clock() - payload.get("at", 0)
        if age > self.store.retention_ms or payload["seq"] < self.store.pruned_through:
            raise CursorExpiredError("cursor older than tombstone retention")
        return payload

    # -- recovery ------------------------------------------------------------

    def recover_orphans(self, schema, session: Session) -> Iterator[GraffitiObject]:
        actor = self._require(session)
        matcher = _as_matcher(schema)
        for obj in self.store.orphans(actor):
            if matcher.matches(obj):
                yield obj

    def channel_stats(self, session: Session) -> Iterator[ChannelStat]:
        actor = self._require(session)
        yield from self.store.channel_stats(actor)

    # -- maintenance ---------------------------------------------------------

    def audit(self) -> list[str]:
        return self.store.audit()

    def close(self) -> None:
        self.store.close()


def open_local(path: Optional[str] = None, **kwargs) -> LocalGraffiti:
    """Open (or create) a local store; no path means in-memory only."""
    return LocalGraffiti(path, **kwargs)
