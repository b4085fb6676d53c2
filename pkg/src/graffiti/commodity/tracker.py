"""Tracker: a persistent map from channel names to channel file URLs.

Like a BitTorrent tracker, but it resolves channels instead of torrent
ids — and unlike WebTorrent's, its announcements survive restarts (they
are appended to a JSON-lines file and compacted on load). Records carry
a ttl; 0 means no expiry.

Wire protocol:

    POST /announce {channel, url, ttl?}  -> 204
    POST /lookup   {channels: [...]}     -> 200 {"results": {channel: [urls]}}
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from typing import Optional
from urllib.parse import urlsplit

import httpx

from ..api import MAX_DISCOVER_CHANNELS, system_clock
from ..errors import TrackerUnavailableError
from ..httpserve import ServiceHandle, serve_wsgi
from ..model import MAX_CHANNEL_BYTES


@dataclass
class TrackerRecord:
    channel: str
    url: str
    announced_at: int
    ttl: int = 0  # seconds; 0 = no expiry

    def expired(self, now_ms: int) -> bool:
        return self.ttl > 0 and self.announced_at + self.ttl * 1000 <= now_ms


def _valid_blob_url(url) -> bool:
    if not isinstance(url, str) or not url:
        return False
    parts = urlsplit(url)
    return bool(parts.scheme) and (bool(parts.netloc) or parts.scheme == "file")


class TrackerServer:
    """WSGI app holding the channel → file-URL map."""

    def __init__(self, data_path: Optional[str] = None, clock=None):
        self.clock = clock or system_clock
        self.records: dict[tuple[str, str], TrackerRecord] = {}
        self._lock = threading.Lock()
        self._path = data_path
        self._log = None
        if data_path:
            os.makedirs(os.path.dirname(os.path.abspath(data_path)), exist_ok=True)
            if os.path.exists(data_path):
                self._load(data_path)
            self._compact()
            self._log = open(data_path, "a")

    def _load(self, path: str) -> None:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    self.records[(rec["channel"], rec["url"])] = TrackerRecord(
                        channel=rec["channel"],
                        url=rec["url"],
                        announced_at=rec["announcedAt"],
                        ttl=rec.get("ttl", 0),
                    )
                except (ValueError, KeyError):
                    continue  # skip corrupt lines; the rest still load

    def _compact(self) -> None:
        if not self._path:
            return
        now = self.clock()
        self.records = {
            k: r for k, r in self.records.items() if not r.expired(now)
        }
        tmp = self._path + ".tmp"
        with open(tmp, "w") as fh:
            for rec in self.records.values():
                fh.write(self._line(rec))
        os.replace(tmp, self._path)

    @staticmethod
    def _line(rec: TrackerRecord) -> str:
        return (
            json.dumps(
                {
                    "channel": rec.channel,
                    "url": rec.url,
                    "announcedAt": rec.announced_at,
                    "ttl": rec.ttl,
                },
                separators=(",", ":"),
            )
            + "\n"
        )

    def announce(self, channel: str, url: str, ttl: int = 0) -> None:
        rec = TrackerRecord(
            channel=channel, url=url, announced_at=self.clock(), ttl=ttl
        )
        with self._lock:
            self.records[(channel, url)] = rec
            if self._log:
                self._log.write(self._line(rec))
                self._log.flush()

    def lookup(self, channels: list[str]) -> dict[str, list[str]]:
        now = self.clock()
        with self._lock:
            out = {c: [] for c in channels}
            for rec in self.records.values():
                if rec.channel in out and not rec.expired(now):
                    out[rec.channel].append(rec.url)
            for urls in out.values():
                urls.sort()
            return out

    # -- WSGI ---------------------------------------------------------------

    def __call__(self, environ, start_response):
        method = environ["REQUEST_METHOD"].upper()
        path = environ.get("PATH_INFO", "/")
        try:
            length = int(environ.get("CONTENT_LENGTH") or 0)
        except ValueError:
            length = 0
        raw = environ["wsgi.input"].read(length) if length else b"{}"
        try:
            body = json.loads(raw)
            if not isinstance(body, dict):
                raise ValueError("body must be a JSON object")
        except ValueError as exc:
            return self._respond(start_response, 400, {"error": str(exc)})

        if method == "POST" and path == "/announce":
            channel, url = body.get("channel"), body.get("url")
            ttl = body.get("ttl", 0)
            if (
                not isinstance(channel, str)
                or not 1 <= len(channel.encode()) <= MAX_CHANNEL_BYTES
                or not _valid_blob_url(url)
                or not isinstance(ttl, int)
                or ttl < 0
            ):
                return self._respond(start_response, 400, {"error": "bad announce"})
            self.announce(channel, url, ttl)
            start_response("204 No Content", [])
            return []

        if method == "POST" and path == "/lookup":
            channels = body.get("channels")
            if (
                not isinstance(channels, list)
                or not 1 <= len(channels) <= MAX_DISCOVER_CHANNELS
                or any(not isinstance(c, str) for c in channels)
            ):
                return self._respond(start_response, 400, {"error": "bad lookup"})
            return self._respond(
                start_response, 200, {"results": self.lookup(channels)}
            )

        return self._respond(start_response, 404, {"error": "not_found"})

    @staticmethod
    def _respond(start_response, status: int, body: dict):
        statuses = {200: "200 OK", 400: "400 Bad Request", 404: "404 Not Found"}
        start_response(statuses[status], [("Content-Type", "application/json")])
        return [json.dumps(body, separators=(",", ":")).encode()]

    def close(self) -> None:
        if self._log:
            self._log.close()
            self._log = None


def serve_tracker(listen_address: str = "127.0.0.1:0",
                  data_path: Optional[str] = None, clock=None) -> ServiceHandle:
    return serve_wsgi(TrackerServer(data_path, clock), listen_address)


# -- client side --------------------------------------------------------------

def tracker_announce(
    tracker: str, channel: str, url: str, ttl: int = 0,
    http: Optional[httpx.Client] = None,
) -> None:
    client = http or httpx.Client(timeout=10.0)
    try:
        resp = client.post(
            tracker + "/announce", json={"channel": channel, "url": url, "ttl": ttl}
        )
    except httpx.HTTPError as exc:
        raise TrackerUnavailableError(str(exc)) from exc
    if resp.status_code != 204:
        raise TrackerUnavailableError(f"announce rejected: {resp.text}")


def tracker_lookup(
    tracker: str, channels: list[str], http: Optional[httpx.Client] = None
) -> dict[str, list[str]]:
    if not channels:
        raise ValueError("lookup needs at least one channel")
    if len(channels) > MAX_DISCOVER_CHANNELS:
        raise ValueError(f"lookup capped at {MAX_DISCOVER_CHANNELS} channels")
    client = http or httpx.Client(timeout=10.0)
    try:
        resp = client.post(tracker + "/lookup", json={"channels": channels})
    except httpx.HTTPError as exc:
        raise TrackerUnavailableError(str(exc)) from exc
    if resp.status_code != 200:
        raise TrackerUnavailableError(f"lookup failed: {resp.text}")
    return resp.json()["results"]
