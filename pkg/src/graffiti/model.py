"""Core object data model: URLs, shape validation, masking, and patches.

Every back-end shares these rules. An object is a mutable JSON value plus
an envelope (url, actor, channels, allowed, revision). Channels and
allowed lists are masked for anyone but the owner so a reader only ever
learns what they implicitly knew already, BCC-style. All functions here
are pure; they never mutate their inputs.
"""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional
from urllib.parse import urlsplit

from .errors import (
    LengthExceededError,
    MalformedOpError,
    MalformedUrlError,
    PathOutOfBoundsError,
    ResultInvalidError,
    ShapeInvalidError,
)

URL_PREFIX = "graffiti:"
SCHEMES = ("local", "remote", "cs")
MAX_CHANNEL_BYTES = 2048
MAX_ACTOR_BYTES = 2048

# Roots an owner may mutate; url/actor/revision are off limits.
MUTABLE_ROOTS = ("value", "channels", "allowed")

_ABS_URI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:\S+$")


@dataclass(frozen=True)
class ObjectUrl:
    """A parsed ``graffiti:<scheme>:<suffix>`` object locator."""

    scheme: str
    suffix: str

    def __str__(self) -> str:
        return f"{URL_PREFIX}{self.scheme}:{self.suffix}"


def parse_url(text: str) -> ObjectUrl:
    """Parse an object URL, raising MalformedUrlError on any deviation.

    Round-trips exactly: ``str(parse_url(t)) == t`` for every valid ``t``.
    """
    if not isinstance(text, str) or not text.startswith(URL_PREFIX):
        raise MalformedUrlError(f"not a graffiti object URL: {text!r}")
    rest = text[len(URL_PREFIX):]
    scheme, sep, suffix = rest.partition(":")
    if not sep or scheme not in SCHEMES:
        raise MalformedUrlError(f"unknown scheme in {text!r}")
    if not suffix:
        raise MalformedUrlError("empty URL suffix")
    if scheme == "remote":
        authority, sep, opaque = suffix.partition("/")
        if not sep or not authority or not opaque:
            raise MalformedUrlError(
                "remote suffix must be '<authority>/<id>'"
            )
    return ObjectUrl(scheme=scheme, suffix=suffix)


def is_object_url(text: str) -> bool:
    try:
        parse_url(text)
    except MalformedUrlError:
        return False
    return True


def actor_violations(uri: Any) -> list[str]:
    if not isinstance(uri, str) or not uri:
        return ["actor must be a non-empty URI string"]
    out = []
    if not _ABS_URI_RE.match(uri):
        out.append("actor must be an absolute URI with a scheme")
    if len(uri.encode("utf-8")) > MAX_ACTOR_BYTES:
        out.append(f"actor exceeds {MAX_ACTOR_BYTES} bytes")
    return out


def is_actor_uri(uri: Any) -> bool:
    return not actor_violations(uri)


def channel_violations(name: Any) -> list[str]:
    if not isinstance(name, str):
        return ["channel name must be a string"]
    n = len(name.encode("utf-8"))
    if n < 1 or n > MAX_CHANNEL_BYTES:
        return [f"channel name must be 1-{MAX_CHANNEL_BYTES} UTF-8 bytes"]
    return []


@dataclass(frozen=True)
class Tombstone:
    """Marker left behind by a deleted or disappeared object.

    Carries only the URL and the deletion time; no value, channels, or
    allowed content survives.
    """

    url: str
    deleted_at: int

    def to_wire(self) -> dict:
        return {"url": self.url, "deletedAt": self.deleted_at}

    @classmethod
    def from_wire(cls, data: dict) -> "Tombstone":
        return cls(url=data["url"], deleted_at=data["deletedAt"])


@dataclass
class GraffitiObject:
    """The atomic social datum: a JSON value plus its envelope."""

    value: dict
    url: str
    actor: str
    channels: list[str] = field(default_factory=list)
    allowed: Optional[list[str]] = None
    revision: int = 0

    def copy(self) -> "GraffitiObject":
        return GraffitiObject(
            value=copy.deepcopy(self.value),
            url=self.url,
            actor=self.actor,
            channels=list(self.channels),
            allowed=None if self.allowed is None else list(self.allowed),
            revision=self.revision,
        )

    def to_wire(self) -> dict:
        """Canonical serialization: value, url, actor, channels, allowed?, revision."""
        out = {
            "value": self.value,
            "url": self.url,
            "actor": self.actor,
            "channels": list(self.channels),
        }
        if self.allowed is not None:
            out["allowed"] = list(self.allowed)
        out["revision"] = self.revision
        return out

    @classmethod
    def from_wire(cls, data: dict) -> "GraffitiObject":
        obj = cls(
            value=data["value"],
            url=data["url"],
            actor=data["actor"],
            channels=list(data["channels"]),
            allowed=list(data["allowed"]) if data.get("allowed") is not None else None,
            revision=data["revision"],
        )
        violations = validate_object_shape(obj)
        if violations:
            raise ShapeInvalidError(violations)
        return obj


def canonical_json(data: Any) -> str:
    """Deterministic compact JSON, for hashing and equality on values."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _as_fields(candidate: Any) -> dict:
    if isinstance(candidate, GraffitiObject):
        return {
            "value": candidate.value,
            "url": candidate.url,
            "actor": candidate.actor,
            "channels": candidate.channels,
            "allowed": candidate.allowed,
            "revision": candidate.revision,
        }
    if isinstance(candidate, dict):
        return candidate
    return {}


def validate_object_shape(candidate: Any) -> list[str]:
    """Return every shape violation, in envelope field order; empty = valid."""
    fields = _as_fields(candidate)
    out: list[str] = []

    value = fields.get("value")
    if not isinstance(value, dict):
        out.append("value must be a JSON object")

    url = fields.get("url")
    if not isinstance(url, str) or not is_object_url(url):
        out.append("url must be a valid graffiti object URL")

    out.extend(actor_violations(fields.get("actor")))

    channels = fields.get("channels")
    if not isinstance(channels, list):
        out.append("channels must be a list")
    else:
        entry_problem = next(
            (p for c in channels for p in channel_violations(c)), None
        )
        if entry_problem:
            out.append(entry_problem)
        elif len(set(channels)) != len(channels):
            out.append("channels entries must be unique")

    allowed = fields.get("allowed")
    if allowed is not None:
        if not isinstance(allowed, list) or any(not is_actor_uri(a) for a in allowed):
            out.append("allowed must be a list of actor URIs")
        elif len(set(allowed)) != len(allowed):
            out.append("allowed entries must be unique")

    revision = fields.get("revision")
    if not isinstance(revision, int) or isinstance(revision, bool) or revision < 0:
        out.append("revision must be a non-negative integer")

    return out


def visible_to(obj: GraffitiObject, viewer: Optional[str]) -> bool:
    """Access rule: public objects to anyone, restricted ones to owner + allowed."""
    if obj.allowed is None:
        return True
    if viewer is None:
        return False
    return viewer == obj.actor or viewer in obj.allowed


def mask_object(
    obj: GraffitiObject,
    viewer: Optional[str],
    queried_channels: Iterable[str],
) -> GraffitiObject:
    """Hide envelope data the viewer does not implicitly know.

    The owner sees the object unchanged. Anyone else sees only the
    channels they queried by name, and — for restricted objects — an
    allowed list containing just themselves: receiving the object already
    told them that much, and nothing more.
    """
    masked = obj.copy()
    if viewer is not None and viewer == obj.actor:
        return masked
    queried = set(queried_channels)
    masked.channels = [c for c in obj.channels if c in queried]
    if obj.allowed is not None:
        masked.allowed = [viewer] if viewer is not None else []
    return masked


# --- RFC 6902 patches (add / remove / replace subset) -----------------------

def _parse_pointer(path: Any) -> list[str]:
    if not isinstance(path, str) or not path.startswith("/"):
        raise MalformedOpError(f"bad JSON pointer: {path!r}")
    return [t.replace("~1", "/").replace("~0", "~") for t in path.split("/")[1:]]


def _resolve_parent(doc: dict, tokens: list[str]):
    node = doc
    for t in tokens[:-1]:
        if isinstance(node, dict):
            if t not in node:
                raise MalformedOpError(f"path segment {t!r} does not exist")
            node = node[t]
        elif isinstance(node, list):
            node = node[_index(t, node, append_ok=False)]
        else:
            raise MalformedOpError(f"cannot descend into {type(node).__name__}")
    return node


def _index(token: str, seq: list, append_ok: bool) -> int:
    if append_ok and token == "-":
        return len(seq)
    if not re.fullmatch(r"0|[1-9][0-9]*", token):
        raise MalformedOpError(f"bad array index {token!r}")
    i = int(token)
    limit = len(seq) + (1 if append_ok else 0)
    if i >= limit:
        raise MalformedOpError(f"array index {i} out of range")
    return i


def _apply_one(doc: dict, op: dict) -> None:
    if not isinstance(op, dict):
        raise MalformedOpError("patch op must be an object")
    name = op.get("op")
    if name not in ("add", "remove", "replace"):
        raise MalformedOpError(f"unsupported op {name!r}")
    tokens = _parse_pointer(op.get("path"))
    if not tokens or tokens[0] not in MUTABLE_ROOTS:
        raise PathOutOfBoundsError(
            f"patch paths must target {'/'.join(MUTABLE_ROOTS)}"
        )
    if name in ("add", "replace") and "value" not in op:
        raise MalformedOpError(f"{name} op requires a value")

    parent = _resolve_parent(doc, tokens)
    last = tokens[-1]

    if isinstance(parent, list):
        if name == "add":
            parent.insert(_index(last, parent, append_ok=True), copy.deepcopy(op["value"]))
        else:
            i = _index(last, parent, append_ok=False)
            if name == "remove":
                del parent[i]
            else:
                parent[i] = copy.deepcopy(op["value"])
    elif isinstance(parent, dict):
        if name != "add" and last not in parent:
            raise MalformedOpError(f"path segment {last!r} does not exist")
        if name == "remove":
            del parent[last]
        else:
            parent[last] = copy.deepcopy(op["value"])
    else:
        raise MalformedOpError(f"cannot index into {type(parent).__name__}")


def apply_patch(obj: GraffitiObject, ops: list[dict]) -> GraffitiObject:
    """Apply an RFC 6902 patch to the object's mutable roots, atomically.

    Either every op applies and the result is shape-valid, or the
    original object is returned untouched and an error is raised.
    """
    if not isinstance(ops, list):
        raise MalformedOpError("patch must be a list of ops")
    doc: dict = {
        "value": copy.deepcopy(obj.value),
        "channels": list(obj.channels),
    }
    if obj.allowed is not None:
        doc["allowed"] = list(obj.allowed)
    for op in ops:
        _apply_one(doc, op)
    patched = GraffitiObject(
        value=doc.get("value"),
        url=obj.url,
        actor=obj.actor,
        channels=doc.get("channels"),
        allowed=doc.get("allowed"),
        revision=obj.revision,
    )
    violations = validate_object_shape(patched)
    if violations:
        raise ResultInvalidError(violations)
    return patched


# --- channel name construction ----------------------------------------------

def concat_channels(parts: list[str]) -> str:
    """Join channel names with ``+`` into a more specific compound channel.

    Literal ``%`` and ``+`` inside a part are percent-encoded first, so
    distinct part lists always produce distinct compound names.
    """
    if len(parts) < 2:
        raise ValueError("concat_channels needs at least 2 parts")
    if any(not p for p in parts):
        raise ValueError("channel parts must be non-empty")
    joined = "+".join(p.replace("%", "%25").replace("+", "%2B") for p in parts)
    if len(joined.encode("utf-8")) > MAX_CHANNEL_BYTES:
        raise LengthExceededError(f"compound channel exceeds {MAX_CHANNEL_BYTES} bytes")
    return joined


def split_concat(name: str) -> list[str]:
    """Inverse of concat_channels."""
    return [p.replace("%2B", "+").replace("%25", "%") for p in name.split("+")]
