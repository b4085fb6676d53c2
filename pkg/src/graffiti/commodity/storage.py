"""Storage adapters over dumb blob hosts, plus a fetcher for their URLs.

An adapter is the write side: one actor's corner of some storage
provider. The fetcher is the read side: anyone can fetch any blob URL
that a tracker hands them, whatever host it points at. Adapters promise
read-after-write consistency within one client and nothing more.
"""
from __future__ import annotations

import os
from abc import ABC, abstractmethod
from typing import Optional
from urllib.parse import quote, unquote, urlsplit

import httpx

from ..errors import BlobFetchFailedError, StorageUnavailableError


class StorageAdapter(ABC):
    """Write interface to one actor's blob namespace."""

    @abstractmethod
    def write_blob(self, path: str, data: bytes) -> None: ...

    @abstractmethod
    def read_blob(self, path: str) -> Optional[bytes]: ...

    @abstractmethod
    def delete_blob(self, path: str) -> None: ...

    @abstractmethod
    def public_url(self, path: str) -> str: ...


class MemoryBlobSpace:
    """Shared in-memory blob universe for tests and simulations."""

    def __init__(self):
        self.blobs: dict[str, bytes] = {}


class MemoryStorage(StorageAdapter):
    def __init__(self, space: MemoryBlobSpace, prefix: str):
        self.space = space
        self.prefix = prefix.strip("/")

    def public_url(self, path: str) -> str:
        return f"mem://{self.prefix}/{path}"

    def write_blob(self, path: str, data: bytes) -> None:
        self.space.blobs[self.public_url(path)] = bytes(data)

    def read_blob(self, path: str) -> Optional[bytes]:
        return self.space.blobs.get(self.public_url(path))

    def delete_blob(self, path: str) -> None:
        self.space.blobs.pop(self.public_url(path), None)


class FileSystemStorage(StorageAdapter):
    """Local directory as a blob host; public URLs use the file scheme."""

    def __init__(self, root: str):
        self.root = os.path.abspath(root)
        os.makedirs(self.root, exist_ok=True)

    def _full(self, path: str) -> str:
        full = os.path.normpath(os.path.join(self.root, path))
        if not full.startswith(self.root):
            raise StorageUnavailableError(f"path escapes storage root: {path}")
        return full

    def public_url(self, path: str) -> str:
        return "file://" + quote(self._full(path))

    def write_blob(self, path: str, data: bytes) -> None:
        full = self._full(path)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        tmp = full + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, full)

    def read_blob(self, path: str) -> Optional[bytes]:
        try:
            with open(self._full(path), "rb") as fh:
                return fh.read()
        except FileNotFoundError:
            return None

    def delete_blob(self, path: str) -> None:
        try:
            os.remove(self._full(path))
        except FileNotFoundError:
            pass


class HttpStorage(StorageAdapter):
    """Static-HTTP host accepting WebDAV-style PUT/DELETE."""

    def __init__(self, base_url: str, http: Optional[httpx.Client] = None):
        self.base_url = base_url.rstrip("/")
        self.http = http or httpx.Client(timeout=10.0)

    def public_url(self, path: str) -> str:
        return f"{self.base_url}/{path}"

    def write_blob(self, path: str, data: bytes) -> None:
        try:
            resp = self.http.put(self.public_url(path), content=data)
        except httpx.HTTPError as exc:
            raise StorageUnavailableError(str(exc)) from exc
        if resp.status_code not in (200, 201, 204):
            raise StorageUnavailableError(f"PUT {path} -> {resp.status_code}")

    def read_blob(self, path: str) -> Optional[bytes]:
        try:
            resp = self.http.get(self.public_url(path))
        except httpx.HTTPError as exc:
            raise StorageUnavailableError(str(exc)) from exc
        if resp.status_code == 404:
            return None
        if resp.status_code != 200:
            raise StorageUnavailableError(f"GET {path} -> {resp.status_code}")
        return resp.content

    def delete_blob(self, path: str) -> None:
        try:
            resp = self.http.delete(self.public_url(path))
        except httpx.HTTPError as exc:
            raise StorageUnavailableError(str(exc)) from exc
        if resp.status_code not in (200, 204, 404):
            raise StorageUnavailableError(f"DELETE {path} -> {resp.status_code}")


class BlobFetcher:
    """Read any blob URL a tracker may hand out.

    Returns None for a missing blob; raises BlobFetchFailedError when the
    host cannot be reached at all.
    """

    def __init__(
        self,
        http: Optional[httpx.Client] = None,
        space: Optional[MemoryBlobSpace] = None,
    ):
        self.http = http
        self.space = space

    def fetch(self, url: str) -> Optional[bytes]:
        scheme = urlsplit(url).scheme
        if scheme == "mem":
            if self.space is None:
                raise BlobFetchFailedError("no memory blob space attached")
            return self.space.blobs.get(url)
        if scheme == "file":
            path = unquote(urlsplit(url).path)
            try:
                with open(path, "rb") as fh:
                    return fh.read()
            except FileNotFoundError:
                return None
            except OSError as exc:
                raise BlobFetchFailedError(f"{url}: {exc}") from exc
        if scheme in ("http", "https"):
            client = self.http or httpx.Client(timeout=10.0)
            try:
                resp = client.get(url)
            except httpx.HTTPError as exc:
                raise BlobFetchFailedError(f"{url}: {exc}") from exc
            if resp.status_code == 404:
                return None
            if resp.status_code != 200:
                raise BlobFetchFailedError(f"{url}: status {resp.status_code}")
            return resp.content
        raise BlobFetchFailedError(f"unsupported blob URL scheme: {url}")


class BlobHostApp:
    """Minimal WSGI blob host: PUT to store, GET to read, DELETE to drop.

    Stands in for a commodity static-hosting provider in tests and demos.
    """

    def __init__(self):
        self.blobs: dict[str, bytes] = {}

    def __call__(self, environ, start_response):
        method = environ["REQUEST_METHOD"].upper()
        path = environ.get("PATH_INFO", "/")
        if method == "PUT":
            try:
                length = int(environ.get("CONTENT_LENGTH") or 0)
            except ValueError:
                length = 0
            self.blobs[path] = environ["wsgi.input"].read(length)
            start_response("204 No Content", [])
            return []
        if method == "GET":
            data = self.blobs.get(path)
            if data is None:
                start_response("404 Not Found", [("Content-Type", "text/plain")])
                return [b"not found"]
            start_response(
                "200 OK", [("Content-Type", "application/octet-stream")]
            )
            return [data]
        if method == "DELETE":
            self.blobs.pop(path, None)
            start_response("204 No Content", [])
            return []
        start_response("405 Method Not Allowed", [])
        return []
