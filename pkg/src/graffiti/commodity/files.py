"""Channel file format: one file per (actor, channel) on dumb storage.

A channel file carries every live object its actor has published to that
channel, plus tombstone entries (marked ``"tombstone": true`` in the same
array) so resumed discovers can learn about disappearances. Files arrive
from arbitrary hosts, so validation pins the trust boundary: a file can
only speak for its own actor, and only for the channel it was announced
under — it cannot inject objects into other channels or impersonate
other actors' files.

``formatVersion`` is 1; a ``partition`` field is reserved for future
schema-based subdivision and is never set by this client.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from ..errors import ActorMismatchError, ChannelMismatchError, MalformedFileError
from ..model import GraffitiObject, Tombstone, validate_object_shape

FORMAT_VERSION = 1


def channel_blob_path(channel: str) -> str:
    """Storage path for a channel's file; hashes dodge path-hostile names."""
    return f"channels/{hashlib.sha256(channel.encode('utf-8')).hexdigest()}.json"


@dataclass
class ChannelFile:
    actor: str
    channel: str
    updated_at: int
    objects: list[GraffitiObject] = field(default_factory=list)
    tombstones: list[Tombstone] = field(default_factory=list)
    format_version: int = FORMAT_VERSION
    partition: Optional[dict] = None


def encode_channel_file(file: ChannelFile) -> bytes:
    entries: list[dict] = [obj.to_wire() for obj in file.objects]
    entries.extend(
        {"tombstone": True, "url": t.url, "deletedAt": t.deleted_at}
        for t in file.tombstones
    )
    doc = {
        "formatVersion": file.format_version,
        "actor": file.actor,
        "channel": file.channel,
        "updatedAt": file.updated_at,
        "objects": entries,
    }
    if file.partition is not None:
        doc["partition"] = file.partition
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode()


def validate_channel_file(data: bytes, expected_channel: str) -> ChannelFile:
    """Parse and vet a fetched channel file.

    Raises MalformedFileError, ChannelMismatchError, or ActorMismatchError;
    a rejected file contributes nothing to discovery.
    """
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedFileError(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFileError("channel file must be a JSON object")
    if doc.get("formatVersion") != FORMAT_VERSION:
        raise MalformedFileError(
            f"unsupported formatVersion {doc.get('formatVersion')!r}"
        )
    actor = doc.get("actor")
    channel = doc.get("channel")
    updated_at = doc.get("updatedAt")
    entries = doc.get("objects")
    if not isinstance(actor, str) or not isinstance(channel, str):
        raise MalformedFileError("actor and channel must be strings")
    if not isinstance(updated_at, int) or not isinstance(entries, list):
        raise MalformedFileError("updatedAt must be an integer, objects a list")
    if channel != expected_channel:
        raise ChannelMismatchError(
            f"file is for channel {channel!r}, expected {expected_channel!r}"
        )

    out = ChannelFile(
        actor=actor,
        channel=channel,
        updated_at=updated_at,
        partition=doc.get("partition"),
    )
    for entry in entries:
        if not isinstance(entry, dict):
            raise MalformedFileError("objects entries must be JSON objects")
        if entry.get("tombstone") is True:
            if not isinstance(entry.get("url"), str) or not isinstance(
                entry.get("deletedAt"), int
            ):
                raise MalformedFileError("bad tombstone entry")
            out.tombstones.append(
                Tombstone(url=entry["url"], deleted_at=entry["deletedAt"])
            )
            continue
        violations = validate_object_shape(entry)
        if violations:
            raise MalformedFileError(f"bad object entry: {violations[0]}")
        obj = GraffitiObject.from_wire(entry)
        if obj.actor != actor:
            raise ActorMismatchError(
                f"object by {obj.actor!r} inside a file owned by {actor!r}"
            )
        if expected_channel not in obj.channels:
            raise ChannelMismatchError(
                f"object {obj.url} does not list channel {expected_channel!r}"
            )
        out.objects.append(obj)
    return out
