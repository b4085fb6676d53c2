"""Announce protocol: rendezvous discovery without a full registry.

Instead of fanning discover out to every known server, an actor who
posts to a small server also publishes an AnnounceServer activity on a
handful of massive well-known servers, crossposted to all the channels
they post to. A reader then asks only the well-known servers who is
where, and queries exactly the announced servers. No objects are missed
as long as reader and poster share at least one well-known server, and
no request ever goes to a small server that has nothing relevant.

Requests to well-known servers carry a merged filter (announcements OR
the caller's own query), so each well-known server is asked exactly
once and content homed there still surfaces.

The privacy variant names announcement channels by the SHA-256 of the
real channel names, so well-known servers never see plaintext channels;
the cost is that content hosted directly on well-known servers is no
longer discoverable through them.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Optional
from urllib.parse import urlsplit

import httpx

from .api import ObjectBase, PullStream, Session, StreamWarning, check_discover_channels
from .errors import GraffitiError, HomeUnavailableError
from .model import canonical_json, channel_violations
from .schema import compile_schema
from .remote.client import RemoteClient

# What an announcement looks like on the wire; target is the origin of
# the server being announced.
ANNOUNCE_SCHEMA = {
    "value": {
        "required": ["activity", "target"],
        "properties": {
            "activity": {"const": "AnnounceServer"},
            "target": {"type": "string"},
        },
    }
}


def hash_channel(name: str) -> str:
    """Privacy alias for a channel: lowercase hex SHA-256 of its UTF-8 bytes."""
    problems = channel_violations(name)
    if problems:
        raise ValueError(problems[0])
    return hashlib.sha256(name.encode("utf-8")).hexdigest()


@dataclass
class AnnounceConfig:
    well_known: list[str]
    hash_channels: bool = False
    allowed: Optional[list[str]] = None
    schemas: Optional[list] = None  # optional hint list carried on announcements

    def __post_init__(self):
        if not self.well_known:
            raise ValueError("announce protocol needs at least one well-known server")

    def transform(self, channels) -> list[str]:
        if self.hash_channels:
            return [hash_channel(c) for c in channels]
        return list(channels)


@dataclass
class PublishReport:
    urls: dict[str, str] = field(default_factory=dict)  # well-known origin -> url
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures


@dataclass
class AnnounceReport:
    """Which servers a discover touched, and which it could skip."""

    queried: list[dict] = field(default_factory=list)  # {"phase", "origin"}
    skipped: list[dict] = field(default_factory=list)  # {"origin", "reason"}

    def queried_origins(self, phase: Optional[str] = None) -> list[str]:
        return [
            q["origin"] for q in self.queried if phase is None or q["phase"] == phase
        ]


class AnnounceStream(PullStream):
    def __init__(self, gen, report: AnnounceReport):
        super().__init__(gen)
        self.report = report


def _valid_origin(origin) -> bool:
    if not isinstance(origin, str):
        return False
    parts = urlsplit(origin)
    return parts.scheme in ("http", "https") and bool(parts.netloc)


def _client(origin: str, http) -> RemoteClient:
    return RemoteClient([origin], http=http)


def publish_announcements(
    sessions: Mapping[str, Session],
    small_server: str,
    channels: list[str],
    config: AnnounceConfig,
    *,
    http: Optional[httpx.Client] = None,
) -> PublishReport:
    """Upsert one AnnounceServer activity per well-known server.

    The activity's channels are the given channels (hashed in the privacy
    variant) plus a deterministic index channel named by the announced
    origin itself, which is how re-publishing finds the existing object
    and accumulates channels onto it instead of duplicating it.
    """
    if not _valid_origin(small_server):
        raise ValueError(f"not a server origin: {small_server!r}")
    report = PublishReport()
    index_channel = config.transform([small_server])[0]
    wanted = set(config.transform(channels)) | {index_channel}
    value = {"activity": "AnnounceServer", "target": small_server}
    if config.schemas is not None:
        value["schemas"] = config.schemas

    for origin in config.well_known:
        session = sessions.get(origin)
        if session is None:
            report.failures[origin] = "no session for this well-known server"
            continue
        client = _client(origin, http)
        mine = {
            "value": {
                "required": ["activity", "target"],
                "properties": {
                    "activity": {"const": "AnnounceServer"},
                    "target": {"const": small_server},
                },
            },
            "actor": {"const": session.actor},
        }
        try:
            existing = list(client.discover([index_channel], mine, session))
            if existing:
                current = existing[0]
                merged = sorted(set(current.channels) | wanted)
                if set(merged) != set(current.channels) or current.value != value:
                    client.put(
                        ObjectBase(
                            value=value,
                            channels=merged,
                            allowed=config.allowed,
                            url=current.url,
                        ),
                        session,
                    )
                report.urls[origin] = current.url
            else:
                obj = client.put(
                    ObjectBase(
                        value=value,
                        channels=sorted(wanted),
                        allowed=config.allowed,
                    ),
                    session,
                )
                report.urls[origin] = obj.url
        except (GraffitiError, httpx.HTTPError) as exc:
            report.failures[origin] = str(exc)
    return report


def announce_discover(
    channels: list[str],
    schema,
    config: AnnounceConfig,
    sessions: Optional[Mapping[str, Session]] = None,
    *,
    http: Optional[httpx.Client] = None,
) -> AnnounceStream:
    """Two-phase discover: rendezvous on well-known servers, then fan out
    to exactly the announced servers."""
    channels = check_discover_channels(channels)
    sessions = sessions or {}
    user_matcher = compile_schema(schema if schema is not None else {})
    announce_matcher = compile_schema(ANNOUNCE_SCHEMA)
    report = AnnounceReport()

    query_channels = config.transform(channels)
    if config.hash_channels:
        phase1_schema = ANNOUNCE_SCHEMA  # plaintext never reaches well-known
    else:
        phase1_schema = {"anyOf": [ANNOUNCE_SCHEMA, user_matcher.doc]}

    def gen():
        seen: set[str] = set()
        # target origin -> list of schema hints (None = unconditional)
        targets: dict[str, list] = {}
        well_known = list(dict.fromkeys(config.well_known))

        for origin in well_known:
            client = _client(origin, http)
            stream = client.discover(
                query_channels, phase1_schema, sessions.get(origin)
            )
            try:
                for obj in stream:
                    if announce_matcher.matches(obj):
                        target = obj.value.get("target")
                        hints = obj.value.get("schemas")
                        bucket = targets.setdefault(target, [])
                        if hints is None:
                            targets[target] = None  # one hint-less announce wins
                        elif bucket is not None:
                            bucket.extend(hints)
                    if (
                        not config.hash_channels
                        and user_matcher.matches(obj)
                        and obj.url not in seen
                    ):
                        seen.add(obj.url)
                        yield obj
            except (GraffitiError, httpx.HTTPError) as exc:
                report.skipped.append({"origin": origin, "reason": f"unreachable: {exc}"})
                yield StreamWarning(origin, str(exc))
                continue
            if stream.warnings:
                # single-origin client: a warning means the server was down
                report.skipped.append(
                    {"origin": origin, "reason": stream.warnings[0].message}
                )
                for w in stream.warnings:
                    yield w
                continue
            report.queried.append({"phase": "rendezvous", "origin": origin})

        wanted_schema = canonical_json(user_matcher.doc)
        for target, hints in sorted(targets.items()):
            if not _valid_origin(target):
                report.skipped.append({"origin": str(target), "reason": "invalid origin"})
                continue
            if target in well_known:
                reason = (
                    "well-known server not queried in privacy mode"
                    if config.hash_channels
                    else "already covered by the rendezvous query"
                )
                report.skipped.append({"origin": target, "reason": reason})
                continue
            if hints is not None and wanted_schema not in {
                canonical_json(h) for h in hints
            }:
                report.skipped.append({"origin": target, "reason": "schema hint mismatch"})
                continue
            client = _client(target, http)
            try:
                stream = client.discover(channels, user_matcher.doc, sessions.get(target))
                for obj in stream:
                    if obj.url not in seen:
                        seen.add(obj.url)
                        yield obj
            except (GraffitiError, httpx.HTTPError) as exc:
                report.skipped.append({"origin": target, "reason": f"unreachable: {exc}"})
                yield StreamWarning(target, str(exc))
                continue
            if stream.warnings:
                report.skipped.append(
                    {"origin": target, "reason": stream.warnings[0].message}
                )
                for w in stream.warnings:
                    yield w
                continue
            report.queried.append({"phase": "announced", "origin": target})
        return None

    return AnnounceStream(gen(), report)
