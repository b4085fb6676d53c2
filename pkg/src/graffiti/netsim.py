"""In-process HTTP fabric: many WSGI servers behind one httpx client.

Protocol tests and the simulation harness run whole federations without
sockets by mapping origins to WSGI apps. Every request is logged, which
is what the announce-protocol efficiency and privacy assertions capture.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional
from urllib.parse import urlsplit

import httpx


@dataclass
class LoggedRequest:
    method: str
    url: str
    body: bytes

    @property
    def origin(self) -> str:
        parts = urlsplit(self.url)
        return f"{parts.scheme}://{parts.netloc}"


class VirtualNet(httpx.BaseTransport):
    """httpx transport that dispatches by authority to in-process WSGI apps."""

    def __init__(self):
        self._transports: dict[str, httpx.WSGITransport] = {}
        self.request_log: list[LoggedRequest] = []

    def add(self, origin: str, wsgi_app) -> None:
        authority = urlsplit(origin).netloc or origin
        self._transports[authority] = httpx.WSGITransport(app=wsgi_app)

    def remove(self, origin: str) -> None:
        authority = urlsplit(origin).netloc or origin
        self._transports.pop(authority, None)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        self.request_log.append(
            LoggedRequest(
                method=request.method,
                url=str(request.url),
                body=request.read(),
            )
        )
        authority = request.url.netloc.decode("ascii")
        transport = self._transports.get(authority)
        if transport is None:
            raise httpx.ConnectError(f"no route to host {authority}", request=request)
        return transport.handle_request(request)

    def client(self, **kwargs) -> httpx.Client:
        return httpx.Client(transport=self, **kwargs)

    def requests_to(self, origin: str) -> list[LoggedRequest]:
        return [r for r in self.request_log if r.origin == origin]

    def clear_log(self) -> None:
        self.request_log.clear()
