"""Reusable conformance suite: one clause per contract guarantee.

Any back-end can be checked by handing ``run_conformance`` a target
factory; each clause runs against a fresh instance and the result is a
pass/fail matrix. Clauses declare the optional features they need —
``allowed`` for access-controlled objects (the cs back-end stores public
objects only) and ``clock`` for retention timing — and are skipped where
a feature is absent, so the same suite drives every implementation.
"""
from __future__ import annotations

import random
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .api import Graffiti, ObjectBase, Session
from .errors import (
    CursorExpiredError,
    GraffitiError,
    NotAuthorizedError,
    NotFoundError,
    SessionRevokedError,
    ShapeInvalidError,
)
from .model import GraffitiObject, mask_object, visible_to


@dataclass
class TargetContext:
    """A live implementation under test."""

    impl: Graffiti
    login: Callable[[str], Session]
    features: frozenset
    retention_ms: int = 0
    advance_clock: Optional[Callable[[int], None]] = None
    close: Callable[[], None] = lambda: None


@dataclass
class Clause:
    name: str
    requires: frozenset
    fn: Callable[[TargetContext], None]


@dataclass
class ClauseResult:
    name: str
    status: str  # pass | fail | skip
    detail: str = ""


@dataclass
class ConformanceReport:
    implementation: str
    rows: list[ClauseResult] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def failed(self) -> list[ClauseResult]:
        return [r for r in self.rows if r.status == "fail"]

    @property
    def passed(self) -> list[ClauseResult]:
        return [r for r in self.rows if r.status == "pass"]

    @property
    def skipped(self) -> list[ClauseResult]:
        return [r for r in self.rows if r.status == "skip"]

    def ok(self) -> bool:
        return not self.failed

    def to_wire(self) -> dict:
        return {
            "implementation": self.implementation,
            "elapsedSeconds": round(self.elapsed_s, 3),
            "clauses": [
                {"name": r.name, "status": r.status, "detail": r.detail}
                for r in self.rows
            ],
            "summary": {
                "pass": len(self.passed),
                "fail": len(self.failed),
                "skip": len(self.skipped),
            },
        }


CLAUSES: list[Clause] = []


def clause(name: str, requires=()):
    def deco(fn):
        CLAUSES.append(Clause(name=name, requires=frozenset(requires), fn=fn))
        return fn

    return deco


def run_conformance(name: str, target_factory: Callable[[], TargetContext]) -> ConformanceReport:
    report = ConformanceReport(implementation=name)
    started = time.monotonic()
    for c in CLAUSES:
        probe = target_factory()
        try:
            if not c.requires <= probe.features:
                missing = ",".join(sorted(c.requires - probe.features))
                report.rows.append(ClauseResult(c.name, "skip", f"needs {missing}"))
                continue
            c.fn(probe)
            report.rows.append(ClauseResult(c.name, "pass"))
        except AssertionError as exc:
            report.rows.append(ClauseResult(c.name, "fail", str(exc) or "assertion"))
        except Exception as exc:  # noqa: BLE001 - any escape is a clause failure
            report.rows.append(
                ClauseResult(c.name, "fail", f"{type(exc).__name__}: {exc}")
            )
        finally:
            probe.close()
    report.elapsed_s = time.monotonic() - started
    return report


# --------------------------------------------------------------------------
# helpers

def _put(ctx, session, value=None, channels=(), allowed=None):
    return ctx.impl.put(
        ObjectBase(value=value or {"content": "x"}, channels=list(channels),
                   allowed=allowed),
        session,
    )


def _never_url(sample_url: str) -> str:
    """A syntactically valid URL of the same authority that never existed."""
    from .model import parse_url

    u = parse_url(sample_url)
    if u.scheme == "remote":
        authority = u.suffix.split("/", 1)[0]
        return f"graffiti:remote:{authority}/feedfacefeedfacefeedfacefeedface"
    if u.scheme == "cs":
        prefix = sample_url.rsplit("/", 1)[0]
        return f"{prefix}/feedfacefeedfacefeedfacefeedface"
    return "graffiti:local:feedfacefeedfacefeedfacefeedface"


def _not_found_raw(fn) -> bytes:
    try:
        fn()
    except NotFoundError as err:
        return err.raw
    raise AssertionError("expected NotFoundError")


def _urls(stream) -> list[str]:
    return [o.url for o in stream]


def _delta_kinds(stream):
    return [(d.kind, (d.object or d.tombstone).url) for d in stream]


CONTENT_SCHEMA = {"value": {"required": ["content"], "properties": {"content": {"type": "string"}}}}


# --------------------------------------------------------------------------
# sessions

@clause("login-assigns-actor-uri")
def _(ctx):
    from .model import is_actor_uri

    s = ctx.login("alice")
    assert is_actor_uri(s.actor), f"bad actor URI: {s.actor!r}"
    assert s.credential, "session must carry an opaque credential"


@clause("login-multiple-actors-coexist")
def _(ctx):
    alice, bob = ctx.login("alice"), ctx.login("bob")
    assert alice.actor != bob.actor
    a = _put(ctx, alice, channels=["c"])
    b = _put(ctx, bob, channels=["c"])
    assert a.actor == alice.actor and b.actor == bob.actor


@clause("logout-revokes-session")
def _(ctx):
    s = ctx.login("alice")
    ctx.impl.logout(s)
    try:
        _put(ctx, s, channels=["c"])
        raise AssertionError("put after logout must fail")
    except (SessionRevokedError, GraffitiError) as err:
        assert not isinstance(err, AssertionError)


@clause("logout-idempotent")
def _(ctx):
    s = ctx.login("alice")
    ctx.impl.logout(s)
    ctx.impl.logout(s)  # must not raise


@clause("logout-leaves-other-sessions-valid")
def _(ctx):
    s1, s2 = ctx.login("alice"), ctx.login("alice")
    ctx.impl.logout(s1)
    obj = _put(ctx, s2, channels=["c"])  # second login unaffected
    assert obj.actor == s2.actor


# --------------------------------------------------------------------------
# put

@clause("put-assigns-url-actor-revision")
def _(ctx):
    from .model import parse_url

    s = ctx.login("alice")
    obj = _put(ctx, s, value={"content": "hello"}, channels=["c"])
    assert parse_url(obj.url).scheme == ctx.impl.scheme
    assert obj.actor == s.actor
    assert obj.revision == 0


@clause("put-returned-object-equals-stored")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"content": "hello"}, channels=["c"])
    got = ctx.impl.get(obj.url, {}, s)
    assert got.to_wire() == obj.to_wire()


@clause("put-rejects-invalid-shape")
def _(ctx):
    s = ctx.login("alice")
    try:
        ctx.impl.put(ObjectBase(value="scalar", channels=[]), s)
        raise AssertionError("scalar value must be rejected")
    except ShapeInvalidError:
        pass


@clause("put-replace-is-wholesale")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"a": 1, "b": 2}, channels=["c1", "c2"])
    out = ctx.impl.put(
        ObjectBase(value={"a": 9}, channels=["c2"], url=obj.url), s
    )
    assert out.value == {"a": 9}
    assert out.channels == ["c2"]
    assert out.revision > obj.revision
    assert out.url == obj.url and out.actor == obj.actor


@clause("put-replace-missing-url-fails")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    try:
        ctx.impl.put(
            ObjectBase(value={}, channels=[], url=_never_url(obj.url)), s
        )
        raise AssertionError("replace of a missing url must fail")
    except NotFoundError:
        pass


@clause("put-replace-by-non-owner-fails-and-preserves")
def _(ctx):
    alice, eve = ctx.login("alice"), ctx.login("eve")
    obj = _put(ctx, alice, value={"content": "mine"}, channels=["c"])
    try:
        ctx.impl.put(ObjectBase(value={"content": "stolen"}, channels=[], url=obj.url), eve)
        raise AssertionError("non-owner replace must fail")
    except (NotAuthorizedError, NotFoundError):
        pass
    assert ctx.impl.get(obj.url, {}, alice).value == {"content": "mine"}


@clause("put-revision-monotonic-over-random-mutations")
def _(ctx):
    rng = random.Random(42)
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"n": 0}, channels=["c"])
    last = obj.revision
    for i in range(100):
        if rng.random() < 0.5:
            obj = ctx.impl.put(
                ObjectBase(value={"n": i}, channels=["c"], url=obj.url), s
            )
        else:
            obj = ctx.impl.patch(
                obj.url, [{"op": "replace", "path": "/value/n", "value": i}], s
            )
        assert obj.revision > last, f"revision did not increase at step {i}"
        last = obj.revision


# --------------------------------------------------------------------------
# get

@clause("get-public-without-session")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"content": "pub"}, channels=["c1", "c2"])
    got = ctx.impl.get(obj.url, {})
    assert got.value == {"content": "pub"}
    assert got.channels == [], "URL fetch carries no channel knowledge"


@clause("get-owner-sees-full-envelope")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c1", "c2"])
    got = ctx.impl.get(obj.url, {}, s)
    assert got.channels == ["c1", "c2"]


@clause("get-schema-mismatch-is-not-found")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"published": 1}, channels=["c"])
    try:
        ctx.impl.get(obj.url, CONTENT_SCHEMA, s)
        raise AssertionError("schema mismatch must read as NotFound")
    except NotFoundError:
        pass


@clause("get-missing-and-deleted-are-byte-identical")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    missing = _not_found_raw(lambda: ctx.impl.get(_never_url(obj.url), {}))
    ctx.impl.delete(obj.url, s)
    deleted = _not_found_raw(lambda: ctx.impl.get(obj.url, {}))
    assert missing == deleted, f"{missing!r} != {deleted!r}"


@clause("get-forbidden-matches-missing-bytes", requires=("allowed",))
def _(ctx):
    alice, eve = ctx.login("alice"), ctx.login("eve")
    bob = ctx.login("bob")
    obj = _put(ctx, alice, channels=["c"], allowed=[bob.actor])
    forbidden = _not_found_raw(lambda: ctx.impl.get(obj.url, {}, eve))
    missing = _not_found_raw(lambda: ctx.impl.get(_never_url(obj.url), {}, eve))
    assert forbidden == missing


@clause("get-allowed-viewer-sees-self-only", requires=("allowed",))
def _(ctx):
    alice, bob = ctx.login("alice"), ctx.login("bob")
    carol = ctx.login("carol")
    obj = _put(ctx, alice, channels=["c"], allowed=[bob.actor, carol.actor])
    got = ctx.impl.get(obj.url, {}, bob)
    assert got.allowed == [bob.actor], "masked allowed must show only the viewer"


# --------------------------------------------------------------------------
# patch

@clause("patch-replaces-value-field")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"content": "hello"}, channels=["c"])
    out = ctx.impl.patch(
        obj.url, [{"op": "replace", "path": "/value/content", "value": "hi"}], s
    )
    assert out.value == {"content": "hi"}
    assert out.revision > obj.revision


@clause("patch-crossposts-by-adding-channel")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["The Glue Factory"])
    out = ctx.impl.patch(
        obj.url, [{"op": "add", "path": "/channels/-", "value": "Glitter"}], s
    )
    assert out.channels == ["The Glue Factory", "Glitter"]


@clause("patch-atomic-on-mid-sequence-failure")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"content": "v"}, channels=["c"])
    try:
        ctx.impl.patch(
            obj.url,
            [
                {"op": "replace", "path": "/value/content", "value": "changed"},
                {"op": "remove", "path": "/value/missing"},
            ],
            s,
        )
        raise AssertionError("patch with a failing op must raise")
    except AssertionError:
        raise
    except GraffitiError:
        pass
    after = ctx.impl.get(obj.url, {}, s)
    assert after.value == {"content": "v"} and after.revision == obj.revision


@clause("patch-meta-fields-rejected")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    try:
        ctx.impl.patch(obj.url, [{"op": "replace", "path": "/url", "value": "x"}], s)
        raise AssertionError("patching /url must fail")
    except AssertionError:
        raise
    except GraffitiError:
        pass
    assert ctx.impl.get(obj.url, {}, s).revision == obj.revision


@clause("patch-invalid-result-rejected")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    try:
        ctx.impl.patch(obj.url, [{"op": "add", "path": "/channels/-", "value": "c"}], s)
        raise AssertionError("duplicate channel must be rejected")
    except AssertionError:
        raise
    except GraffitiError:
        pass
    assert ctx.impl.get(obj.url, {}, s).channels == ["c"]


@clause("patch-by-non-owner-fails")
def _(ctx):
    alice, eve = ctx.login("alice"), ctx.login("eve")
    obj = _put(ctx, alice, value={"content": "v"}, channels=["c"])
    try:
        ctx.impl.patch(
            obj.url, [{"op": "replace", "path": "/value/content", "value": "x"}], eve
        )
        raise AssertionError("non-owner patch must fail")
    except (NotAuthorizedError, NotFoundError):
        pass
    assert ctx.impl.get(obj.url, {}, alice).value == {"content": "v"}


@clause("patch-remove-allowed-publishes", requires=("allowed",))
def _(ctx):
    alice, bob = ctx.login("alice"), ctx.login("bob")
    obj = _put(ctx, alice, channels=["c"], allowed=[bob.actor])
    ctx.impl.patch(obj.url, [{"op": "remove", "path": "/allowed"}], alice)
    got = ctx.impl.get(obj.url, {})  # now public: anonymous fetch works
    assert got.allowed is None


# --------------------------------------------------------------------------
# delete

@clause("delete-then-get-not-found")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    ctx.impl.delete(obj.url, s)
    try:
        ctx.impl.get(obj.url, {}, s)
        raise AssertionError("deleted object must be NotFound even to its owner")
    except NotFoundError:
        pass


@clause("delete-missing-not-found")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    try:
        ctx.impl.delete(_never_url(obj.url), s)
        raise AssertionError("deleting a missing url must fail")
    except NotFoundError:
        pass


@clause("delete-by-non-owner-fails-object-retrievable")
def _(ctx):
    alice, eve = ctx.login("alice"), ctx.login("eve")
    obj = _put(ctx, alice, channels=["c"])
    try:
        ctx.impl.delete(obj.url, eve)
        raise AssertionError("non-owner delete must fail")
    except (NotAuthorizedError, NotFoundError):
        pass
    assert ctx.impl.get(obj.url, {}).url == obj.url


@clause("delete-emits-exactly-one-tombstone")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    ctx.impl.delete(obj.url, s)
    first = _delta_kinds(ctx.impl.continue_discover(snap.cursor))
    assert first == [("tombstone", obj.url)], first


@clause("tombstone-once-per-disappearance")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c"])
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    ctx.impl.delete(obj.url, s)
    d1 = ctx.impl.continue_discover(snap.cursor)
    assert _delta_kinds(d1) == [("tombstone", obj.url)]
    d2 = d1.resume()
    assert _delta_kinds(d2) == [], "tombstone must not repeat on later continues"


# --------------------------------------------------------------------------
# discover

@clause("discover-masks-channels-to-query")
def _(ctx):
    s = ctx.login("alice")
    _put(ctx, s, channels=["a", "b"])
    got = list(ctx.impl.discover(["b", "c"], {}))
    assert len(got) == 1 and got[0].channels == ["b"]


@clause("discover-owner-sees-full-channels")
def _(ctx):
    s = ctx.login("alice")
    _put(ctx, s, channels=["a", "b"])
    got = list(ctx.impl.discover(["a"], {}, s))
    assert got[0].channels == ["a", "b"]


@clause("discover-unknown-channel-is-empty-with-cursor")
def _(ctx):
    stream = ctx.impl.discover(["never-used-channel"], {})
    assert list(stream) == []
    assert stream.cursor, "even an empty snapshot must yield a cursor"


@clause("discover-yields-each-object-once")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["a", "b"])
    got = _urls(ctx.impl.discover(["a", "b"], {}))
    assert got == [obj.url], f"object must appear once, got {got}"


@clause("discover-each-queried-channel-finds-it")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["a", "b"])
    via_a = list(ctx.impl.discover(["a"], {}))
    via_b = list(ctx.impl.discover(["b"], {}))
    assert [o.url for o in via_a] == [obj.url] and via_a[0].channels == ["a"]
    assert [o.url for o in via_b] == [obj.url] and via_b[0].channels == ["b"]


@clause("discover-schema-filters-objects")
def _(ctx):
    s = ctx.login("alice")
    keep = _put(ctx, s, value={"content": "text"}, channels=["c"])
    _put(ctx, s, value={"other": 1}, channels=["c"])
    got = _urls(ctx.impl.discover(["c"], CONTENT_SCHEMA))
    assert got == [keep.url]


@clause("discover-dm-scenario-actor-and-value-filter")
def _(ctx):
    alice, me = ctx.login("alice"), ctx.login("me")
    dm_value = {"content": "hi", "published": 500, "to": me.actor}
    dm = _put(ctx, alice, value=dm_value, channels=[me.actor])
    _put(ctx, alice, value={"content": "public post"}, channels=[me.actor])
    other = ctx.login("other")
    _put(ctx, other, value=dict(dm_value), channels=[me.actor])
    schema = {
        "value": {
            "required": ["content", "published", "to"],
            "properties": {
                "content": {"type": "string"},
                "published": {"type": "number"},
                "to": {"const": me.actor},
            },
        },
        "actor": {"const": alice.actor},
    }
    got = _urls(ctx.impl.discover([me.actor], schema, me))
    assert got == [dm.url]


@clause("discover-restricted-object-visibility", requires=("allowed",))
def _(ctx):
    alice, bob, eve = ctx.login("alice"), ctx.login("bob"), ctx.login("eve")
    obj = _put(ctx, alice, channels=["c"], allowed=[bob.actor])
    assert _urls(ctx.impl.discover(["c"], {}, bob)) == [obj.url]
    assert _urls(ctx.impl.discover(["c"], {}, eve)) == []
    assert _urls(ctx.impl.discover(["c"], {})) == []
    got = list(ctx.impl.discover(["c"], {}, bob))
    assert got[0].allowed == [bob.actor]


@clause("discover-channel-batch-limits")
def _(ctx):
    try:
        ctx.impl.discover([], {})
        raise AssertionError("empty channel batch must be rejected")
    except ValueError:
        pass
    try:
        ctx.impl.discover([f"c{i}" for i in range(65)], {})
        raise AssertionError("65 channels must be rejected")
    except ValueError:
        pass


@clause("discover-unicode-channel-round-trip")
def _(ctx):
    s = ctx.login("alice")
    channel = "вечеринка/🎉 zip:12345"
    obj = _put(ctx, s, channels=[channel])
    assert _urls(ctx.impl.discover([channel], {})) == [obj.url]


@clause("discover-schema-compile-errors-surface")
def _(ctx):
    from .errors import SchemaCompileError

    try:
        ctx.impl.discover(["c"], {"value": {"if": {}}})
        raise AssertionError("unsupported keyword must fail compilation")
    except SchemaCompileError:
        pass


@clause("discover-rejects-revoked-session")
def _(ctx):
    s = ctx.login("alice")
    ctx.impl.logout(s)
    try:
        list(ctx.impl.discover(["c"], {}, s))
        raise AssertionError("discover with a revoked session must fail")
    except SessionRevokedError:
        pass


@clause("recovery-rejects-revoked-session")
def _(ctx):
    s = ctx.login("alice")
    ctx.impl.logout(s)
    for call in (
        lambda: list(ctx.impl.recover_orphans({}, s)),
        lambda: list(ctx.impl.channel_stats(s)),
    ):
        try:
            call()
            raise AssertionError("recovery with a revoked session must fail")
        except SessionRevokedError:
            pass


# --------------------------------------------------------------------------
# continue

@clause("continue-empty-delta-with-fresh-cursor")
def _(ctx):
    s = ctx.login("alice")
    _put(ctx, s, channels=["c"])
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    delta = ctx.impl.continue_discover(snap.cursor)
    assert list(delta) == []
    assert delta.cursor, "every continuation must end with a usable cursor"


@clause("continue-new-object-appears")
def _(ctx):
    s = ctx.login("alice")
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    obj = _put(ctx, s, channels=["c"])
    assert _delta_kinds(ctx.impl.continue_discover(snap.cursor)) == [("object", obj.url)]


@clause("continue-modified-object-reappears-with-new-revision")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"content": "1"}, channels=["c"])
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    ctx.impl.patch(obj.url, [{"op": "replace", "path": "/value/content", "value": "2"}], s)
    deltas = list(ctx.impl.continue_discover(snap.cursor))
    assert len(deltas) == 1 and deltas[0].kind == "object"
    assert deltas[0].object.revision > obj.revision


@clause("continue-channel-removal-tombstones")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, channels=["c", "d"])
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    ctx.impl.patch(obj.url, [{"op": "remove", "path": "/channels/0"}], s)
    assert _delta_kinds(ctx.impl.continue_discover(snap.cursor)) == [
        ("tombstone", obj.url)
    ]


@clause("continue-schema-mismatch-tombstones")
def _(ctx):
    s = ctx.login("alice")
    obj = _put(ctx, s, value={"content": "text"}, channels=["c"])
    snap = ctx.impl.discover(["c"], CONTENT_SCHEMA)
    snap.drain()
    ctx.impl.patch(obj.url, [{"op": "remove", "path": "/value/content"}], s)
    assert _delta_kinds(ctx.impl.continue_discover(snap.cursor)) == [
        ("tombstone", obj.url)
    ]


@clause("continue-allowed-revocation-tombstones", requires=("allowed",))
def _(ctx):
    alice, bob, carol = ctx.login("alice"), ctx.login("bob"), ctx.login("carol")
    obj = _put(ctx, alice, channels=["c"], allowed=[bob.actor])
    snap = ctx.impl.discover(["c"], {}, bob)
    snap.drain()
    ctx.impl.put(
        ObjectBase(value=obj.value, channels=["c"], allowed=[carol.actor], url=obj.url),
        alice,
    )
    assert _delta_kinds(ctx.impl.continue_discover(snap.cursor, bob)) == [
        ("tombstone", obj.url)
    ]


@clause("continue-is-recursively-continuable")
def _(ctx):
    s = ctx.login("alice")
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    a = _put(ctx, s, channels=["c"])
    d1 = ctx.impl.continue_discover(snap.cursor)
    assert _delta_kinds(d1) == [("object", a.url)]
    b = _put(ctx, s, channels=["c"])
    d2 = d1.resume()
    assert _delta_kinds(d2) == [("object", b.url)]
    assert _delta_kinds(d2.resume()) == []


@clause("cursor-serializes-and-survives-reuse")
def _(ctx):
    import json as _json

    s = ctx.login("alice")
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    token = _json.loads(_json.dumps({"cursor": snap.cursor}))["cursor"]
    assert isinstance(token, str) and token.isprintable()
    obj = _put(ctx, s, channels=["c"])
    assert _delta_kinds(ctx.impl.continue_discover(token)) == [("object", obj.url)]


@clause("cursor-valid-at-exact-retention-age", requires=("clock",))
def _(ctx):
    s = ctx.login("alice")
    _put(ctx, s, channels=["c"])
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    ctx.advance_clock(ctx.retention_ms)
    delta = ctx.impl.continue_discover(snap.cursor)
    assert list(delta) == []


@clause("cursor-expires-past-retention", requires=("clock",))
def _(ctx):
    s = ctx.login("alice")
    _put(ctx, s, channels=["c"])
    snap = ctx.impl.discover(["c"], {})
    snap.drain()
    ctx.advance_clock(ctx.retention_ms + 1)
    try:
        list(ctx.impl.continue_discover(snap.cursor))
        raise AssertionError("cursor older than retention must expire")
    except CursorExpiredError:
        pass


@clause("garbage-cursor-reads-as-expired")
def _(ctx):
    try:
        list(ctx.impl.continue_discover("not a cursor at all"))
        raise AssertionError("garbage cursor must signal a fresh poll")
    except CursorExpiredError:
        pass


# --------------------------------------------------------------------------
# recovery methods

@clause("orphans-channelless-object-recovered")
def _(ctx):
    s = ctx.login("alice")
    orphan = _put(ctx, s, channels=[])
    got = _urls(ctx.impl.recover_orphans({}, s))
    assert got == [orphan.url]


@clause("orphans-exclude-channeled-objects")
def _(ctx):
    s = ctx.login("alice")
    _put(ctx, s, channels=["c"])
    assert list(ctx.impl.recover_orphans({}, s)) == []


@clause("orphans-exclude-other-actors")
def _(ctx):
    alice, bob = ctx.login("alice"), ctx.login("bob")
    _put(ctx, bob, channels=[])
    assert list(ctx.impl.recover_orphans({}, alice)) == []


@clause("orphans-schema-filtered")
def _(ctx):
    s = ctx.login("alice")
    keep = _put(ctx, s, value={"content": "x"}, channels=[])
    _put(ctx, s, value={"n": 1}, channels=[])
    assert _urls(ctx.impl.recover_orphans(CONTENT_SCHEMA, s)) == [keep.url]


@clause("channel-stats-recount-oracle")
def _(ctx):
    s = ctx.login("alice")
    expected = Counter()
    _put(ctx, s, channels=["x"])
    expected["x"] += 1
    _put(ctx, s, channels=["x", "y"])
    expected["x"] += 1
    expected["y"] += 1
    dead = _put(ctx, s, channels=["y"])
    ctx.impl.delete(dead.url, s)
    stats = {st.channel: st.count for st in ctx.impl.channel_stats(s)}
    assert stats == dict(expected), f"{stats} != {dict(expected)}"


@clause("channel-stats-empty-for-fresh-actor")
def _(ctx):
    s = ctx.login("alice")
    assert list(ctx.impl.channel_stats(s)) == []


@clause("channel-stats-scoped-to-actor")
def _(ctx):
    alice, bob = ctx.login("alice"), ctx.login("bob")
    _put(ctx, alice, channels=["shared"])
    _put(ctx, bob, channels=["shared"])
    _put(ctx, bob, channels=["shared"])
    stats = {st.channel: st.count for st in ctx.impl.channel_stats(alice)}
    assert stats == {"shared": 1}, "other actors' posts must not inflate counts"


@clause("channel-stats-last-modified-is-max-mtime")
def _(ctx):
    s = ctx.login("alice")
    _put(ctx, s, channels=["c"])
    obj = _put(ctx, s, channels=["c"])
    ctx.impl.patch(obj.url, [{"op": "replace", "path": "/value", "value": {"v": 2}}], s)
    stats = list(ctx.impl.channel_stats(s))
    assert len(stats) == 1 and stats[0].count == 2
    assert stats[0].last_modified > 0


# --------------------------------------------------------------------------
# cross-cutting semantics

@clause("masking-random-sample-against-oracle")
def _(ctx):
    rng = random.Random(7)
    s = ctx.login("alice")
    universe = ["a", "b", "c", "d"]
    created = []
    for _i in range(8):
        chans = rng.sample(universe, rng.randint(1, 3))
        created.append((_put(ctx, s, channels=chans), chans))
    viewer_session = ctx.login("viewer")
    for _i in range(10):
        queried = rng.sample(universe, rng.randint(1, 4))
        got = {o.url: o for o in ctx.impl.discover(queried, {}, viewer_session)}
        for obj, chans in created:
            expect = sorted(set(chans) & set(queried))
            if expect:
                assert obj.url in got
                assert sorted(got[obj.url].channels) == expect
            else:
                assert obj.url not in got


@clause("snapshot-plus-deltas-equals-later-snapshot")
def _(ctx):
    rng = random.Random(2024)
    sessions = [ctx.login("alice"), ctx.login("bob")]
    pool = []
    channels = ["c0", "c1"]

    def random_op(step):
        s = rng.choice(sessions)
        roll = rng.random()
        if roll < 0.45 or not pool:
            pool.append(
                _put(ctx, s, value={"n": step},
                     channels=rng.sample(["c0", "c1", "zz"], rng.randint(1, 2)))
            )
        elif roll < 0.75:
            victim = rng.choice(pool)
            owner = next(x for x in sessions if x.actor == victim.actor)
            ctx.impl.put(
                ObjectBase(
                    value={"n": step},
                    channels=rng.sample(["c0", "c1", "zz"], rng.randint(1, 2)),
                    url=victim.url,
                ),
                owner,
            )
        else:
            victim = pool.pop(rng.randrange(len(pool)))
            owner = next(x for x in sessions if x.actor == victim.actor)
            ctx.impl.delete(victim.url, owner)

    for trial in range(6):
        for step in range(4):
            random_op(step)
        snap = ctx.impl.discover(channels, {})
        state = {o.url: o.revision for o in snap}
        for step in range(5):
            random_op(100 + step)
        deltas = ctx.impl.continue_discover(snap.cursor)
        for d in deltas:
            if d.kind == "object":
                state[d.object.url] = d.object.revision
            else:
                state.pop(d.tombstone.url, None)
        later = Counter(
            (o.url, o.revision) for o in ctx.impl.discover(channels, {})
        )
        merged = Counter(state.items())
        assert merged == later, f"trial {trial}: {merged} != {later}"


@clause("access-control-random-allowed-lists", requires=("allowed",))
def _(ctx):
    rng = random.Random(11)
    owner = ctx.login("owner")
    others = [ctx.login(f"v{i}") for i in range(3)]
    actors = [s.actor for s in others]
    objs = []
    for i in range(10):
        allowed = None if rng.random() < 0.4 else rng.sample(actors, rng.randint(0, 2))
        objs.append((_put(ctx, owner, value={"i": i}, channels=["c"], allowed=allowed), allowed))
    for viewer in others + [None]:
        stream = ctx.impl.discover(["c"], {}, viewer) if viewer else ctx.impl.discover(["c"], {})
        visible = set(_urls(stream))
        for obj, allowed in objs:
            should = allowed is None or (viewer is not None and viewer.actor in allowed)
            assert (obj.url in visible) == should, (
                f"allowed={allowed} viewer={viewer.actor if viewer else None}"
            )
