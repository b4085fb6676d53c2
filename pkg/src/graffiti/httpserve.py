"""Socket-serving glue for the WSGI apps in this package."""
from __future__ import annotations

import socketserver
import threading
import wsgiref.simple_server
from typing import Optional

from .errors import BindFailedError


class _ThreadingWSGIServer(socketserver.ThreadingMixIn, wsgiref.simple_server.WSGIServer):
    daemon_threads = True


class _QuietHandler(wsgiref.simple_server.WSGIRequestHandler):
    def log_message(self, *args):  # keep stderr clean; not an access log
        pass


class ServiceHandle:
    """A WSGI app bound to a real socket."""

    def __init__(self, app, host: str, port: int):
        try:
            self._httpd = wsgiref.simple_server.make_server(
                host,
                port,
                app,
                server_class=_ThreadingWSGIServer,
                handler_class=_QuietHandler,
            )
        except OSError as exc:
            raise BindFailedError(f"cannot bind {host}:{port}: {exc}") from exc
        self.app = app
        self.host, self.port = self._httpd.server_address[:2]
        self._thread: Optional[threading.Thread] = None

    @property
    def origin(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start_background(self) -> "ServiceHandle":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def serve_wsgi(app, listen_address: str) -> ServiceHandle:
    host, _, port = listen_address.partition(":")
    return ServiceHandle(app, host or "127.0.0.1", int(port or 0))
