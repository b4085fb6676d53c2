"""Ready-made conformance targets: one fresh rig per clause run.

The remote rig runs a real server app and a real client joined by the
in-process HTTP fabric; the commodity rig runs a tracker plus in-memory
blob storage the same way. All three share a manual clock so retention
behavior is testable.
"""
from __future__ import annotations

import secrets

from .commodity import CommodityClient, MemoryBlobSpace, MemoryStorage, TrackerServer
from .conformance import TargetContext
from .local import LocalGraffiti
from .netsim import VirtualNet
from .remote.client import RemoteClient
from .remote.server import RemoteServer, ServerConfig
from .store import ManualClock

TEST_RETENTION_MS = 14 * 24 * 3600 * 1000


def local_target() -> TargetContext:
    clock = ManualClock()
    impl = LocalGraffiti(clock=clock, retention_ms=TEST_RETENTION_MS)
    return TargetContext(
        impl=impl,
        login=lambda handle: impl.login(handle),
        features=frozenset({"allowed", "clock"}),
        retention_ms=TEST_RETENTION_MS,
        advance_clock=clock.advance,
        close=impl.close,
    )


def remote_target(data_path=None) -> TargetContext:
    clock = ManualClock()
    origin = f"srv-{secrets.token_hex(4)}.test"
    server = RemoteServer(
        ServerConfig(
            public_origin=origin,
            data_path=data_path,
            token_ttl=10**12,  # clock moves by weeks in clauses; keep tokens alive
            tombstone_retention=TEST_RETENTION_MS // 1000,
            secret_rounds=256,
            clock=clock,
        )
    )
    net = VirtualNet()
    net.add(f"http://{origin}", server)
    impl = RemoteClient(
        [f"http://{origin}"], http=net.client(), default_origin_scheme="http"
    )

    def login(handle: str):
        try:
            impl.register(handle, f"secret-{handle}")
        except Exception:
            pass  # already registered in this rig
        return impl.login(handle, secret=f"secret-{handle}")

    return TargetContext(
        impl=impl,
        login=login,
        features=frozenset({"allowed", "clock"}),
        retention_ms=TEST_RETENTION_MS,
        advance_clock=clock.advance,
        close=server.close,
    )


def commodity_target() -> TargetContext:
    clock = ManualClock()
    net = VirtualNet()
    tracker = TrackerServer(clock=clock)
    net.add("http://tracker.test", tracker)
    space = MemoryBlobSpace()
    impl = CommodityClient(
        "http://tracker.test",
        lambda handle: MemoryStorage(space, f"blobs/{handle}"),
        http=net.client(),
        blob_space=space,
        clock=clock,
        retention_ms=TEST_RETENTION_MS,
    )
    return TargetContext(
        impl=impl,
        login=lambda handle: impl.login(handle),
        features=frozenset({"clock"}),
        retention_ms=TEST_RETENTION_MS,
        advance_clock=clock.advance,
    )


TARGETS = {
    "local": local_target,
    "remote": remote_target,
    "cs": commodity_target,
}
