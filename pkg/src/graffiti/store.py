"""Embedded object store engine: log-structured state with change history.

One engine instance backs one scheme authority (a local database or one
remote server). Every mutation is an event with a monotonically
increasing sequence number and the object's full post-event state, so a
discover snapshot is just "state now" and a continuation is a diff
between "state at cursor seq" and "state now" — which makes tombstones
for deleted *and* no-longer-matching objects fall out naturally.

Durability, when a path is given, is an append-only log of events
(version byte, then length-prefixed JSON records) with compaction that
drops history older than the tombstone retention window; cursors older
than that window are expired anyway.
"""
from __future__ import annotations

import copy
import json
import os
import struct
import threading
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .api import DEFAULT_RETENTION_MS, Delta, ObjectBase, ChannelStat, system_clock
from .errors import (
    NotAuthorizedError,
    NotFoundError,
    ShapeInvalidError,
    StorageUnavailableError,
)
from .model import (
    GraffitiObject,
    Tombstone,
    apply_patch,
    mask_object,
    validate_object_shape,
    visible_to,
)

_VERSION_BYTE = b"\x01"
_LEN = struct.Struct(">I")


class ManualClock:
    """Injectable clock for tests; returns milliseconds."""

    def __init__(self, start: int = 1_700_000_000_000):
        self.now = start

    def __call__(self) -> int:
        return self.now

    def advance(self, ms: int) -> None:
        self.now += ms


@dataclass
class _Event:
    seq: int
    ts: int
    url: str
    state: Optional[dict]  # wire dict after the event; None = deleted


class ObjectStore:
    """Single-writer, multi-reader store for one URL authority."""

    def __init__(
        self,
        url_factory: Callable[[], str],
        *,
        path: Optional[str] = None,
        clock: Optional[Callable[[], int]] = None,
        retention_ms: int = DEFAULT_RETENTION_MS,
    ):
        self.url_factory = url_factory
        self.clock = clock or system_clock
        self.retention_ms = retention_ms
        self.lock = threading.RLock()

        self.objects: dict[str, GraffitiObject] = {}
        self.tombstones: dict[str, Tombstone] = {}
        self.channel_index: dict[str, set[str]] = {}
        self.actor_index: dict[str, set[str]] = {}
        self.mtimes: dict[str, int] = {}
        self.history: dict[str, list[_Event]] = {}
        self.events: list[tuple[int, int, str]] = []  # (seq, ts, url) ascending
        self.seq = 0
        self.pruned_through = 0  # highest seq dropped from self.events

        # instrumentation: discover work done, for complexity assertions
        self.counters = {"objects_examined": 0}

        self._path = path
        self._log = None
        if path is not None:
            self._open_log(path)

    # -- mutations ---------------------------------------------------------

    def create(self, base: ObjectBase, actor: str) -> GraffitiObject:
        base.checked()
        with self.lock:
            obj = GraffitiObject(
                value=copy.deepcopy(base.value),
                url=self.url_factory(),
                actor=actor,
                channels=list(base.channels),
                allowed=None if base.allowed is None else list(base.allowed),
                revision=0,
            )
            violations = validate_object_shape(obj)
            if violations:
                raise ShapeInvalidError(violations)
            self._commit(obj)
            return obj.copy()

    def replace(self, url: str, base: ObjectBase, actor: str) -> GraffitiObject:
        base.checked()
        with self.lock:
            existing = self._own(url, actor)
            obj = GraffitiObject(
                value=copy.deepcopy(base.value),
                url=url,
                actor=existing.actor,
                channels=list(base.channels),
                allowed=None if base.allowed is None else list(base.allowed),
                revision=existing.revision + 1,
            )
            violations = validate_object_shape(obj)
            if violations:
                raise ShapeInvalidError(violations)
            self._commit(obj)
            return obj.copy()

    def patch(self, url: str, ops: list[dict], actor: str) -> GraffitiObject:
        with self.lock:
            existing = self._own(url, actor)
            patched = apply_patch(existing, ops)
            patched.revision = existing.revision + 1
            self._commit(patched)
            return patched.copy()

    def delete(self, url: str, actor: str) -> None:
        with self.lock:
            self._own(url, actor)
            self._commit_delete(url)

    def _own(self, url: str, actor: str) -> GraffitiObject:
        obj = self.objects.get(url)
        if obj is None:
            raise NotFoundError()
        if obj.actor != actor:
            if not visible_to(obj, actor):
                raise NotFoundError()
            raise NotAuthorizedError("only the creator of an object can modify it")
        return obj

    def _commit(self, obj: GraffitiObject) -> None:
        now = self.clock()
        old = self.objects.get(obj.url)
        if old is not None:
            self._unindex(old)
        self.objects[obj.url] = obj
        self._index(obj)
        self.mtimes[obj.url] = now
        self.tombstones.pop(obj.url, None)
        self._record(_Event(self._next_seq(), now, obj.url, obj.to_wire()))

    def _commit_delete(self, url: str) -> None:
        now = self.clock()
        old = self.objects.pop(url)
        self._unindex(old)
        self.mtimes[url] = now
        self.tombstones[url] = Tombstone(url=url, deleted_at=now)
        self._record(_Event(self._next_seq(), now, url, None))

    def _next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def _index(self, obj: GraffitiObject) -> None:
        for c in obj.channels:
            self.channel_index.setdefault(c, set()).add(obj.url)
        self.actor_index.setdefault(obj.actor, set()).add(obj.url)

    def _unindex(self, obj: GraffitiObject) -> None:
        for c in obj.channels:
            urls = self.channel_index.get(c)
            if urls:
                urls.discard(obj.url)
                if not urls:
                    del self.channel_index[c]
        urls = self.actor_index.get(obj.actor)
        if urls:
            urls.discard(obj.url)
            if not urls:
                del self.actor_index[obj.actor]

    def _record(self, event: _Event) -> None:
        self.events.append((event.seq, event.ts, event.url))
        self.history.setdefault(event.url, []).append(event)
        self._append_log(event)
        self.prune()

    # -- queries -----------------------------------------------------------

    def get(self, url: str) -> Optional[GraffitiObject]:
        with self.lock:
            obj = self.objects.get(url)
            return obj.copy() if obj else None

    def candidates(self, channels: Iterable[str]) -> set[str]:
        """URLs of live objects in any of the channels; O(hits), not O(store)."""
        out: set[str] = set()
        for c in channels:
            out |= self.channel_index.get(c, set())
        self.counters["objects_examined"] += len(out)
        return out

    def snapshot_seq(self) -> int:
        with self.lock:
            return self.seq

    def urls_changed_since(self, seq: int) -> list[str]:
        seen = set()
        out = []
        idx = bisect_right(self.events, (seq, float("inf"), ""))
        for _, _, url in self.events[idx:]:
            if url not in seen:
                seen.add(url)
                out.append(url)
        return out

    def state_at(self, url: str, seq: int) -> Optional[dict]:
        """The object's wire state at the given sequence point, if any."""
        records = self.history.get(url, [])
        state = None
        for rec in records:
            if rec.seq > seq:
                break
            state = rec.state
        return state

    def orphans(self, actor: str) -> list[GraffitiObject]:
        with self.lock:
            return [
                self.objects[u].copy()
                for u in sorted(self.actor_index.get(actor, ()))
                if not self.objects[u].channels
            ]

    def channel_stats(self, actor: str) -> list[ChannelStat]:
        with self.lock:
            counts: dict[str, int] = {}
            latest: dict[str, int] = {}
            for url in self.actor_index.get(actor, ()):
                obj = self.objects[url]
                mtime = self.mtimes.get(url, 0)
                for c in obj.channels:
                    counts[c] = counts.get(c, 0) + 1
                    latest[c] = max(latest.get(c, 0), mtime)
            return [
                ChannelStat(channel=c, count=n, last_modified=latest[c])
                for c, n in sorted(counts.items())
            ]

    # -- filtered views ------------------------------------------------------

    def snapshot(self, channels, matcher, viewer) -> list[GraffitiObject]:
        """Masked matching objects, consistent at one sequence point."""
        with self.lock:
            out = []
            for url in sorted(self.candidates(channels)):
                obj = self.objects[url]
                masked = self._masked_match(obj, channels, matcher, viewer)
                if masked is not None:
                    out.append(masked)
            return out

    def deltas(self, since_seq: int, channels, matcher, viewer) -> list[Delta]:
        """Changes since a snapshot: objects that (still) match, tombstones
        for anything that stopped matching the channels, schema, or viewer."""
        with self.lock:
            now = self.clock()
            out = []
            for url in self.urls_changed_since(since_seq):
                before = self.state_at(url, since_seq)
                current = self.objects.get(url)
                matched_before = before is not None and self._masked_match(
                    _from_state(before), channels, matcher, viewer
                ) is not None
                masked_now = (
                    self._masked_match(current, channels, matcher, viewer)
                    if current is not None
                    else None
                )
                if masked_now is not None:
                    out.append(Delta.for_object(masked_now))
                elif matched_before:
                    stone = self.tombstones.get(url)
                    deleted_at = (
                        stone.deleted_at if stone else self.mtimes.get(url, now)
                    )
                    out.append(
                        Delta.for_tombstone(Tombstone(url=url, deleted_at=deleted_at))
                    )
            return out

    def _masked_match(self, obj, channels, matcher, viewer):
        if not set(obj.channels) & set(channels):
            return None
        if not visible_to(obj, viewer):
            return None
        masked = mask_object(obj, viewer, channels)
        if matcher is not None and not matcher.matches(masked):
            return None
        return masked

    # -- maintenance ---------------------------------------------------------

    def prune(self) -> None:
        """Drop change history and tombstones older than the retention window.

        Keeps, per URL, everything inside the window plus the newest older
        event as the base state — any cursor that would need more has
        already expired.
        """
        cutoff = self.clock() - self.retention_ms
        while self.events and self.events[0][1] < cutoff:
            seq, _, _ = self.events.pop(0)
            self.pruned_through = max(self.pruned_through, seq)
        for url in list(self.history):
            records = self.history[url]
            keep_from = 0  # index of the newest pre-cutoff record, the base state
            for i, rec in enumerate(records):
                if rec.ts < cutoff:
                    keep_from = i
            records[:] = records[keep_from:]
            if (
                len(records) == 1
                and records[0].state is None
                and records[0].ts < cutoff
            ):
                del self.history[url]
        for url, stone in list(self.tombstones.items()):
            if stone.deleted_at < cutoff:
                del self.tombstones[url]

    def audit(self) -> list[str]:
        """Compare live indexes against recomputation; empty = consistent."""
        with self.lock:
            problems = []
            want_channels: dict[str, set[str]] = {}
            want_actors: dict[str, set[str]] = {}
            for url, obj in self.objects.items():
                for c in obj.channels:
                    want_channels.setdefault(c, set()).add(url)
                want_actors.setdefault(obj.actor, set()).add(url)
            for name, have, want in (
                ("channel", self.channel_index, want_channels),
                ("actor", self.actor_index, want_actors),
            ):
                for key in set(have) | set(want):
                    if have.get(key, set()) != want.get(key, set()):
                        problems.append(f"{name} index inconsistent for {key!r}")
            return sorted(problems)

    # -- persistence ---------------------------------------------------------

    def _open_log(self, path: str) -> None:
        try:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            if os.path.exists(path):
                self._replay(path)
            self._log = open(path, "ab")
            if os.path.getsize(path) == 0:
                self._log.write(_VERSION_BYTE)
                self._log.flush()
        except OSError as exc:
            raise StorageUnavailableError(str(exc)) from exc

    def _replay(self, path: str) -> None:
        with open(path, "rb") as fh:
            version = fh.read(1)
            if version != _VERSION_BYTE:
                raise StorageUnavailableError(f"unknown log version {version!r}")
            while True:
                header = fh.read(_LEN.size)
                if not header:
                    break
                if len(header) < _LEN.size:
                    break  # torn tail record: ignore
                (length,) = _LEN.unpack(header)
                blob = fh.read(length)
                if len(blob) < length:
                    break
                rec = json.loads(blob)
                event = _Event(
                    seq=rec["seq"], ts=rec["ts"], url=rec["url"], state=rec["state"]
                )
                self._apply_replayed(event)
        self.prune()

    def _apply_replayed(self, event: _Event) -> None:
        self.seq = max(self.seq, event.seq)
        self.events.append((event.seq, event.ts, event.url))
        self.history.setdefault(event.url, []).append(event)
        old = self.objects.pop(event.url, None)
        if old is not None:
            self._unindex(old)
        self.mtimes[event.url] = event.ts
        if event.state is None:
            self.tombstones[event.url] = Tombstone(url=event.url, deleted_at=event.ts)
        else:
            obj = _from_state(event.state)
            self.objects[event.url] = obj
            self._index(obj)
            self.tombstones.pop(event.url, None)

    def _append_log(self, event: _Event) -> None:
        if self._log is None:
            return
        blob = json.dumps(
            {"seq": event.seq, "ts": event.ts, "url": event.url, "state": event.state},
            separators=(",", ":"),
        ).encode()
        try:
            self._log.write(_LEN.pack(len(blob)) + blob)
            self._log.flush()
        except OSError as exc:
            raise StorageUnavailableError(str(exc)) from exc

    def compact(self) -> None:
        """Rewrite the log keeping only retained history."""
        if self._path is None:
            return
        with self.lock:
            self.prune()
            tmp = self._path + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(_VERSION_BYTE)
                records = sorted(
                    (rec for recs in self.history.values() for rec in recs),
                    key=lambda r: r.seq,
                )
                for rec in records:
                    blob = json.dumps(
                        {"seq": rec.seq, "ts": rec.ts, "url": rec.url, "state": rec.state},
                        separators=(",", ":"),
                    ).encode()
                    fh.write(_LEN.pack(len(blob)) + blob)
            if self._log:
                self._log.close()
            os.replace(tmp, self._path)
            self._log = open(self._path, "ab")

    def close(self) -> None:
        with self.lock:
            if self._log:
                self._log.close()
                self._log = None


def _from_state(state: dict) -> GraffitiObject:
    """Rebuild an object from a trusted recorded wire state."""
    return GraffitiObject(
        value=copy.deepcopy(state["value"]),
        url=state["url"],
        actor=state["actor"],
        channels=list(state["channels"]),
        allowed=list(state["allowed"]) if state.get("allowed") is not None else None,
        revision=state["revision"],
    )
