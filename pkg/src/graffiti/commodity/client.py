"""Client-side implementation over commodity storage plus a tracker.

The client keeps one master file per actor (``objects.json``, the source
of truth for that actor's objects) and one derived file per (actor,
channel), announced to the tracker. Discover asks the tracker for every
queried channel in one batch, fetches each announced file, validates it,
and filters by schema locally — the storage hosts are too dumb to filter.

Objects get URLs of the form
``graffiti:cs:<percent-encoded master file URL>/<object id>``, so get()
can fetch the master file directly, wherever it lives.

Version 1 serves public objects only: puts carrying an allowed list fail
loudly instead of pretending dumb storage can keep a secret.
"""
from __future__ import annotations

import hashlib
import json
import secrets
import threading
import uuid
from dataclasses import dataclass
from typing import Iterator, Optional
from urllib.parse import quote, unquote

import httpx

from ..api import (
    DEFAULT_RETENTION_MS,
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
    BlobFetchFailedError,
    CursorExpiredError,
    GraffitiError,
    MalformedUrlError,
    NotAuthorizedError,
    NotFoundError,
    SessionRevokedError,
    UnsupportedAllowedError,
)
from ..model import (
    GraffitiObject,
    Tombstone,
    apply_patch,
    mask_object,
    parse_url,
    visible_to,
)
from ..schema import CompiledMatcher, compile_schema
from .files import ChannelFile, channel_blob_path, encode_channel_file, validate_channel_file
from .storage import BlobFetcher, MemoryBlobSpace, StorageAdapter
from .tracker import tracker_announce, tracker_lookup

MASTER_PATH = "objects.json"


@dataclass
class _Account:
    actor: str
    handle: str
    adapter: StorageAdapter


def _as_matcher(schema) -> CompiledMatcher:
    if isinstance(schema, CompiledMatcher):
        return schema
    return compile_schema(schema if schema is not None else {})


class CommodityClient(Graffiti):
    scheme = "cs"

    def __init__(
        self,
        tracker: str,
        storage_factory,
        *,
        http: Optional[httpx.Client] = None,
        blob_space: Optional[MemoryBlobSpace] = None,
        clock=None,
        retention_ms: int = DEFAULT_RETENTION_MS,
        announce_ttl: int = 0,
    ):
        self.tracker = tracker
        self.storage_factory = storage_factory
        self.http = http or httpx.Client(timeout=10.0)
        self.fetcher = BlobFetcher(http=self.http, space=blob_space)
        self.clock = clock or system_clock
        self.retention_ms = retention_ms
        self.announce_ttl = announce_ttl
        self._accounts: dict[str, _Account] = {}  # credential -> account
        self._write_lock = threading.RLock()  # serialize master-file rewrites

    # -- sessions -------------------------------------------------------------

    def login(self, handle: Optional[str] = None, **kwargs) -> Session:
        handle = handle or f"anon-{secrets.token_hex(4)}"
        # a handle that is already a URI becomes the actor verbatim, which
        # lets one identity span back-ends; bare handles get a cs: URI
        actor = handle if ":" in handle else f"cs:actor:{handle}"
        credential = secrets.token_urlsafe(16)
        self._accounts[credential] = _Account(
            actor=actor, handle=handle, adapter=self.storage_factory(handle)
        )
        return Session(actor=actor, credential=credential, home=self.scheme)

    def logout(self, session: Session) -> None:
        self._accounts.pop(session.credential, None)

    def _viewer(self, session: Optional[Session]) -> Optional[str]:
        if session is None:
            return None
        account = self._accounts.get(session.credential)
        if account is None or account.actor != session.actor:
            raise SessionRevokedError("session is not active")
        return session.actor

    def _account(self, session: Session) -> _Account:
        self._viewer(session)
        return self._accounts[session.credential]

    # -- master file ------------------------------------------------------------

    def _master_url(self, account: _Account) -> str:
        return account.adapter.public_url(MASTER_PATH)

    def _load_master(self, account: _Account) -> dict:
        raw = account.adapter.read_blob(MASTER_PATH)
        if raw is None:
            return {
                "formatVersion": 1,
                "actor": account.actor,
                "entries": [],
                "tombstones": [],
            }
        return json.loads(raw)

    def _write_master(self, account: _Account, master: dict) -> None:
        account.adapter.write_blob(
            MASTER_PATH,
            json.dumps(master, separators=(",", ":"), ensure_ascii=False).encode(),
        )

    def _object_url(self, account: _Account, object_id: str) -> str:
        return f"graffiti:cs:{quote(self._master_url(account), safe='')}/{object_id}"

    @staticmethod
    def parse_cs_url(url: str) -> tuple[str, str]:
        """(blob URL of the master file, object id)."""
        parsed = parse_url(url)
        if parsed.scheme != "cs":
            raise MalformedUrlError(f"not a cs object URL: {url}")
        encoded, sep, object_id = parsed.suffix.rpartition("/")
        if not sep or not encoded or not object_id:
            raise MalformedUrlError(f"cs suffix must be '<blob url>/<id>': {url}")
        return unquote(encoded), object_id

    # -- write path ----------------------------------------------------------------

    def _flush(self, account: _Account, master: dict, affected: set[str]) -> None:
        """Persist the master, rebuild affected channel files, re-announce."""
        cutoff = self.clock() - self.retention_ms
        master["tombstones"] = [
            t for t in master.get("tombstones", []) if t["deletedAt"] >= cutoff
        ]
        self._write_master(account, master)
        for channel in sorted(affected):
            objs = [
                GraffitiObject.from_wire(e["object"])
                for e in master["entries"]
                if channel in e["object"]["channels"]
            ]
            stones = [
                Tombstone(url=t["url"], deleted_at=t["deletedAt"])
                for t in master["tombstones"]
                if channel in t.get("channels", [])
            ]
            data = encode_channel_file(
                ChannelFile(
                    actor=account.actor,
                    channel=channel,
                    updated_at=self.clock(),
                    objects=objs,
                    tombstones=stones,
                )
            )
            path = channel_blob_path(channel)
            account.adapter.write_blob(path, data)
            tracker_announce(
                self.tracker,
                channel,
                account.adapter.public_url(path),
                self.announce_ttl,
                http=self.http,
            )

    @staticmethod
    def _entry_index(master: dict, object_id: str) -> Optional[int]:
        for i, entry in enumerate(master.get("entries", [])):
            if entry["id"] == object_id:
                return i
        return None

    def put(self, base: ObjectBase, session: Session) -> GraffitiObject:
        base.checked()
        if base.allowed is not None:
            raise UnsupportedAllowedError(
                "the cs back-end stores public objects only; allowed lists "
                "would leak through the storage host"
            )
        account = self._account(session)
        with self._write_lock:
            master = self._load_master(account)
            now = self.clock()
            if base.url is None:
                object_id = uuid.uuid4().hex
                obj = GraffitiObject(
                    value=base.value,
                    url=self._object_url(account, object_id),
                    actor=account.actor,
                    channels=list(base.channels),
                    allowed=None,
                    revision=0,
                )
                master["entries"].append(
                    {"id": object_id, "updatedAt": now, "object": obj.to_wire()}
                )
                self._flush(account, master, set(base.channels))
                return obj

            blob_url, object_id = self.parse_cs_url(base.url)
            if blob_url != self._master_url(account):
                self._foreign_mutation(base.url, session)
            idx = self._entry_index(master, object_id)
            if idx is None:
                raise NotFoundError()
            old = GraffitiObject.from_wire(master["entries"][idx]["object"])
            obj = GraffitiObject(
                value=base.value,
                url=old.url,
                actor=old.actor,
                channels=list(base.channels),
                allowed=None,
                revision=old.revision + 1,
            )
            master["entries"][idx] = {
                "id": object_id, "updatedAt": now, "object": obj.to_wire()
            }
            removed = set(old.channels) - set(obj.channels)
            if removed:
                master["tombstones"].append(
                    {"url": obj.url, "deletedAt": now, "channels": sorted(removed)}
                )
            self._flush(account, master, set(old.channels) | set(obj.channels))
            return obj

    def _foreign_mutation(self, url: str, session: Session):
        """Mutating someone else's object: NotAuthorized if it exists and is
        visible, the canonical NotFound otherwise."""
        try:
            self.get(url, {}, session)
        except NotFoundError:
            raise
        raise NotAuthorizedError("only the creator of an object can modify it")

    def patch(self, url: str, ops: list[dict], session: Session) -> GraffitiObject:
        if any(
            isinstance(op, dict)
            and isinstance(op.get("path"), str)
            and op["path"].split("/")[1:2] == ["allowed"]
            for op in (ops if isinstance(ops, list) else [])
        ):
            raise UnsupportedAllowedError("allowed lists are unsupported on cs")
        account = self._account(session)
        blob_url, object_id = self.parse_cs_url(url)
        if blob_url != self._master_url(account):
            self._foreign_mutation(url, session)
        with self._write_lock:
            master = self._load_master(account)
            idx = self._entry_index(master, object_id)
            if idx is None:
                raise NotFoundError()
            old = GraffitiObject.from_wire(master["entries"][idx]["object"])
            patched = apply_patch(old, ops)
            patched.revision = old.revision + 1
            now = self.clock()
            master["entries"][idx] = {
                "id": object_id, "updatedAt": now, "object": patched.to_wire()
            }
            removed = set(old.channels) - set(patched.channels)
            if removed:
                master["tombstones"].append(
                    {"url": url, "deletedAt": now, "channels": sorted(removed)}
                )
            self._flush(account, master, set(old.channels) | set(patched.channels))
            return patched

    def delete(self, url: str, session: Session) -> None:
        account = self._account(session)
        blob_url, object_id = self.parse_cs_url(url)
        if blob_url != self._master_url(account):
            self._foreign_mutation(url, session)
        with self._write_lock:
            master = self._load_master(account)
            idx = self._entry_index(master, object_id)
            if idx is None:
                raise NotFoundError()
            old = GraffitiObject.from_wire(master["entries"][idx]["object"])
            del master["entries"][idx]
            now = self.clock()
            master["tombstones"].append(
                {"url": url, "deletedAt": now, "channels": list(old.channels)}
            )
            self._flush(account, master, set(old.channels))

    # -- read path -------------------------------------------------------------------

    def get(self, url: str, schema, session: Optional[Session] = None) -> GraffitiObject:
        viewer = self._viewer(session)
        matcher = _as_matcher(schema)
        blob_url, object_id = self.parse_cs_url(url)
        try:
            raw = self.fetcher.fetch(blob_url)
        except BlobFetchFailedError:
            raise NotFoundError() from None
        if raw is None:
            raise NotFoundError()
        try:
            master = json.loads(raw)
            entries = master.get("entries", [])
        except ValueError:
            raise NotFoundError() from None
        for entry in entries:
            if entry.get("id") == object_id:
                try:
                    obj = GraffitiObject.from_wire(entry["object"])
                except (GraffitiError, KeyError, TypeError):
                    raise NotFoundError() from None
                if obj.url != url or not visible_to(obj, viewer):
                    raise NotFoundError()
                masked = mask_object(obj, viewer, [])
                if not matcher.matches(masked):
                    raise NotFoundError()
                return masked
        raise NotFoundError()

    # -- discovery ---------------------------------------------------------------------

    def _collect(self, channels, viewer):
        """Fetch and vet every announced file; best (url -> object), hashes,
        tombstones seen, and warnings."""
        lookup = tracker_lookup(self.tracker, list(channels), http=self.http)
        best: dict[str, GraffitiObject] = {}
        hashes: dict[str, dict] = {}
        stones: dict[str, int] = {}
        warnings: list[StreamWarning] = []
        for channel in channels:
            for file_url in lookup.get(channel, []):
                try:
                    raw = self.fetcher.fetch(file_url)
                except BlobFetchFailedError as exc:
                    warnings.append(StreamWarning(file_url, f"fetch failed: {exc}"))
                    continue
                if raw is None:
                    warnings.append(StreamWarning(file_url, "file missing"))
                    continue
                try:
                    cf = validate_channel_file(raw, channel)
                except GraffitiError as exc:
                    warnings.append(StreamWarning(file_url, f"rejected: {exc}"))
                    continue
                hashes[file_url] = {
                    "u": cf.updated_at,
                    "h": hashlib.sha256(raw).hexdigest(),
                }
                for stone in cf.tombstones:
                    stones[stone.url] = max(
                        stones.get(stone.url, 0), stone.deleted_at
                    )
                for obj in cf.objects:
                    if not visible_to(obj, viewer):
                        continue
                    kept = best.get(obj.url)
                    if kept is None or obj.revision > kept.revision:
                        best[obj.url] = obj
        return best, hashes, stones, warnings

    def discover(self, channels, schema, session: Optional[Session] = None) -> PullStream:
        viewer = self._viewer(session)
        channels = check_discover_channels(channels)
        matcher = _as_matcher(schema)

        def gen():
            best, hashes, _stones, warnings = self._collect(channels, viewer)
            for w in warnings:
                yield w
            seen: dict[str, int] = {}
            for url in sorted(best):
                masked = mask_object(best[url], viewer, channels)
                if matcher.matches(masked):
                    seen[url] = best[url].revision
                    yield masked
            return encode_cursor(
                {
                    "v": 1,
                    "impl": "cs",
                    "at": self.clock(),
                    "channels": list(channels),
                    "schema": matcher.doc,
                    "files": hashes,
                    "seen": seen,
                }
            )

        return PullStream(gen(), resume_fn=self.continue_discover)

    def continue_discover(self, cursor: str, session: Optional[Session] = None) -> PullStream:
        viewer = self._viewer(session)
        payload = decode_cursor(cursor)
        if payload.get("impl") != "cs":
            raise CursorExpiredError("cursor from a different implementation")
        if self.clock() - payload.get("at", 0) > self.retention_ms:
            raise CursorExpiredError("cursor older than tombstone retention")
        channels = payload["channels"]
        matcher = _as_matcher(payload["schema"])
        previously_seen: dict[str, int] = payload.get("seen", {})

        def gen():
            best, hashes, stones, warnings = self._collect(channels, viewer)
            for w in warnings:
                yield w
            now_seen: dict[str, int] = {}
            for url in sorted(best):
                masked = mask_object(best[url], viewer, channels)
                if matcher.matches(masked):
                    now_seen[url] = best[url].revision
            for url, revision in sorted(now_seen.items()):
                if previously_seen.get(url) != revision:
                    yield Delta.for_object(mask_object(best[url], viewer, channels))
            for url in sorted(previously_seen):
                if url not in now_seen:
                    deleted_at = stones.get(url, self.clock())
                    yield Delta.for_tombstone(Tombstone(url=url, deleted_at=deleted_at))
            return encode_cursor(
                {
                    "v": 1,
                    "impl": "cs",
                    "at": self.clock(),
                    "channels": list(channels),
                    "schema": matcher.doc,
                    "files": hashes,
                    "seen": now_seen,
                }
            )

        return PullStream(gen(), resume_fn=self.continue_discover)

    # -- recovery --------------------------------------------------------------------

    def recover_orphans(self, schema, session: Session) -> Iterator[GraffitiObject]:
        account = self._account(session)
        matcher = _as_matcher(schema)
        master = self._load_master(account)
        for entry in master["entries"]:
            obj = GraffitiObject.from_wire(entry["object"])
            if not obj.channels and matcher.matches(obj):
                yield obj

    def channel_stats(self, session: Session) -> Iterator[ChannelStat]:
        account = self._account(session)
        master = self._load_master(account)
        counts: dict[str, int] = {}
        latest: dict[str, int] = {}
        for entry in master["entries"]:
            for channel in entry["object"]["channels"]:
                counts[channel] = counts.get(channel, 0) + 1
                latest[channel] = max(latest.get(channel, 0), entry["updatedAt"])
        for channel in sorted(counts):
            yield ChannelStat(
                channel=channel, count=counts[channel], last_modified=latest[channel]
            )
