"""The abstract Graffiti API that every back-end implements.

Applications talk to this interface only; the scheme of an object's URL
decides which implementation serves it. Mutating calls take a Session
proving control of an actor; get and discover work anonymously on public
content. Discover is a pull stream over a snapshot that terminates with
an opaque cursor; continuing from the cursor yields only what changed:
new or modified objects, and tombstones for anything that disappeared
from the query's view.
"""
from __future__ import annotations

import base64
import binascii
import json
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import CursorExpiredError, ShapeInvalidError
from .model import (
    GraffitiObject,
    Tombstone,
    actor_violations,
    channel_violations,
    is_object_url,
)

MAX_DISCOVER_CHANNELS = 64

# Tombstones (and therefore cursors) survive this long by default.
DEFAULT_RETENTION_MS = 30 * 24 * 60 * 60 * 1000


@dataclass
class Session:
    """Proof of control of an actor, opaque to applications.

    ``credential`` is never interpreted above the API; ``home`` names the
    implementation binding that issued the session (a URL scheme), and
    ``origin`` pins the issuing server for federated back-ends.
    """

    actor: str
    credential: Optional[str]
    home: str
    origin: Optional[str] = None


@dataclass
class ObjectBase:
    """What a caller supplies to put: the mutable half of an object.

    ``url`` present means replacement of an existing object; absent means
    creation, with url and actor assigned by the implementation.
    """

    value: dict
    channels: list[str] = field(default_factory=list)
    allowed: Optional[list[str]] = None
    url: Optional[str] = None

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.value, dict):
            out.append("value must be a JSON object")
        if self.url is not None and not is_object_url(self.url):
            out.append("url must be a valid graffiti object URL")
        if not isinstance(self.channels, list):
            out.append("channels must be a list")
        else:
            problem = next(
                (p for c in self.channels for p in channel_violations(c)), None
            )
            if problem:
                out.append(problem)
            elif len(set(self.channels)) != len(self.channels):
                out.append("channels entries must be unique")
        if self.allowed is not None:
            if not isinstance(self.allowed, list) or any(
                actor_violations(a) for a in self.allowed
            ):
                out.append("allowed must be a list of actor URIs")
            elif len(set(self.allowed)) != len(self.allowed):
                out.append("allowed entries must be unique")
        return out

    def checked(self) -> "ObjectBase":
        violations = self.violations()
        if violations:
            raise ShapeInvalidError(violations)
        return self

    @classmethod
    def from_wire(cls, data: dict) -> "ObjectBase":
        if not isinstance(data, dict):
            raise ShapeInvalidError(["object base must be a JSON object"])
        return cls(
            value=data.get("value"),
            channels=data.get("channels", []),
            allowed=data.get("allowed"),
            url=data.get("url"),
        )


@dataclass(frozen=True)
class ChannelStat:
    channel: str
    count: int
    last_modified: int

    def to_wire(self) -> dict:
        return {
            "channel": self.channel,
            "count": self.count,
            "lastModified": self.last_modified,
        }


@dataclass(frozen=True)
class Delta:
    """One change event from a continued discover stream."""

    kind: str  # "object" | "tombstone"
    object: Optional[GraffitiObject] = None
    tombstone: Optional[Tombstone] = None

    @classmethod
    def for_object(cls, obj: GraffitiObject) -> "Delta":
        return cls(kind="object", object=obj)

    @classmethod
    def for_tombstone(cls, ts: Tombstone) -> "Delta":
        return cls(kind="tombstone", tombstone=ts)


@dataclass(frozen=True)
class StreamWarning:
    origin: Optional[str]
    message: str


class PullStream:
    """Single-consumer pull stream ending with a continuation cursor.

    Iterate to exhaustion, then read ``.cursor`` (and ``.warnings``).
    ``resume()`` continues from the cursor on the issuing implementation.
    """

    def __init__(self, gen, resume_fn=None):
        self._gen = gen
        self._resume_fn = resume_fn
        self.cursor: Optional[str] = None
        self.warnings: list[StreamWarning] = []
        self.exhausted = False

    def __iter__(self):
        return self

    def __next__(self):
        while True:
            try:
                item = next(self._gen)
            except StopIteration as stop:
                self.exhausted = True
                if stop.value is not None:
                    self.cursor = stop.value
                raise StopIteration from None
            if isinstance(item, StreamWarning):
                self.warnings.append(item)
                continue
            return item

    def drain(self) -> list:
        return list(self)

    def resume(self, session: Optional[Session] = None) -> "PullStream":
        if not self.exhausted:
            raise RuntimeError("stream not exhausted; drain it before resuming")
        if self.cursor is None or self._resume_fn is None:
            raise RuntimeError("stream has no continuation")
        return self._resume_fn(self.cursor, session)


def check_discover_channels(channels) -> list[str]:
    """Validate a discover channel batch; raises ValueError on misuse."""
    if not isinstance(channels, (list, tuple)) or not (
        1 <= len(channels) <= MAX_DISCOVER_CHANNELS
    ):
        raise ValueError(
            f"discover takes between 1 and {MAX_DISCOVER_CHANNELS} channels"
        )
    for c in channels:
        problems = channel_violations(c)
        if problems:
            raise ValueError(problems[0])
    return list(channels)


# --- cursors ----------------------------------------------------------------

def encode_cursor(payload: dict) -> str:
    raw = json.dumps(payload, separators=(",", ":"), sort_keys=True).encode()
    return base64.urlsafe_b64encode(raw).decode("ascii")


def decode_cursor(token: str) -> dict:
    try:
        data = json.loads(base64.urlsafe_b64decode(token.encode("ascii")))
        if not isinstance(data, dict):
            raise ValueError("cursor payload must be an object")
        return data
    except (ValueError, binascii.Error) as exc:
        # An unreadable cursor gets the same recovery path as an expired
        # one: the application polls discover from scratch.
        raise CursorExpiredError(f"unreadable cursor: {exc}") from exc


def system_clock() -> int:
    return int(time.time() * 1000)


class Graffiti(ABC):
    """Abstract interface every back-end implements.

    Streams returned by discover/continue_discover are single-consumer;
    mutations to one URL are serialized by the owning store.
    """

    scheme: str

    @abstractmethod
    def login(self, handle: Optional[str] = None, **kwargs) -> Session:
        """Authenticate as an actor; sessions may coexist freely."""

    @abstractmethod
    def logout(self, session: Session) -> None:
        """Revoke a session. Idempotent; other sessions stay valid."""

    @abstractmethod
    def put(self, base: ObjectBase, session: Session) -> GraffitiObject:
        """Create (no url) or wholesale-replace (url present) an object."""

    @abstractmethod
    def get(self, url: str, schema, session: Optional[Session] = None) -> GraffitiObject:
        """Fetch one object by URL, masked for the viewer.

        Raises NotFoundError identically for objects that are missing,
        deleted, invisible to the viewer, or rejected by the schema.
        """

    @abstractmethod
    def patch(self, url: str, ops: list[dict], session: Session) -> GraffitiObject:
        """Apply an RFC 6902 patch to the caller's own object, atomically."""

    @abstractmethod
    def delete(self, url: str, session: Session) -> None:
        """Delete the caller's own object; continuations see one tombstone."""

    @abstractmethod
    def discover(
        self, channels: list[str], schema, session: Optional[Session] = None
    ) -> PullStream:
        """Stream every visible object with ≥1 queried channel matching schema."""

    @abstractmethod
    def continue_discover(
        self, cursor: str, session: Optional[Session] = None
    ) -> PullStream:
        """Stream Deltas since the cursor's snapshot; ends with a new cursor."""

    @abstractmethod
    def recover_orphans(self, schema, session: Session) -> Iterator[GraffitiObject]:
        """The caller's own live objects that sit in no channel at all."""

    @abstractmethod
    def channel_stats(self, session: Session) -> Iterator[ChannelStat]:
        """Per-channel live-object counts for the calling actor."""
