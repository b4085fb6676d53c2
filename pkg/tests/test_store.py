import json
import random

import pytest

from graffiti.api import ObjectBase
from graffiti.errors import (
    CursorExpiredError,
    NotAuthorizedError,
    NotFoundError,
    ShapeInvalidError,
)
from graffiti.model import GraffitiObject
from graffiti.schema import compile_schema
from graffiti.store import ManualClock, ObjectStore

OWNER = "graffiti:local:actor/owner"
OTHER = "graffiti:local:actor/other"
ANY = compile_schema({})


def make_store(path=None, clock=None, retention_ms=None):
    seqs = iter(range(10**6))
    kwargs = {}
    if retention_ms is not None:
        kwargs["retention_ms"] = retention_ms
    return ObjectStore(
        lambda: f"graffiti:local:test{next(seqs)}",
        path=path,
        clock=clock,
        **kwargs,
    )


def test_create_assigns_fresh_url_and_revision_zero():
    s = make_store()
    obj = s.create(ObjectBase(value={"a": 1}, channels=["c"]), OWNER)
    assert obj.revision == 0
    assert obj.actor == OWNER
    assert s.get(obj.url).to_wire() == obj.to_wire()


def test_replace_keeps_actor_and_bumps_revision():
    s = make_store()
    obj = s.create(ObjectBase(value={"a": 1}, channels=["c"]), OWNER)
    out = s.replace(obj.url, ObjectBase(value={"a": 2}, channels=["d"]), OWNER)
    assert out.revision == 1
    assert out.actor == OWNER
    assert out.channels == ["d"]


def test_revision_strictly_increases_over_100_random_mutations():
    s = make_store()
    rng = random.Random(7)
    obj = s.create(ObjectBase(value={"n": 0}, channels=["c"]), OWNER)
    seen = [obj.revision]
    for i in range(100):
        if rng.random() < 0.5:
            obj = s.replace(obj.url, ObjectBase(value={"n": i}, channels=["c"]), OWNER)
        else:
            obj = s.patch(obj.url, [{"op": "replace", "path": "/value/n", "value": i}], OWNER)
        seen.append(obj.revision)
    assert all(b > a for a, b in zip(seen, seen[1:]))


def test_mutations_by_non_owner():
    s = make_store()
    public = s.create(ObjectBase(value={}, channels=["c"]), OWNER)
    with pytest.raises(NotAuthorizedError):
        s.delete(public.url, OTHER)
    hidden = s.create(ObjectBase(value={}, channels=["c"], allowed=[]), OWNER)
    with pytest.raises(NotFoundError):
        s.delete(hidden.url, OTHER)  # invisible objects do not leak existence


def test_shape_invalid_rejected():
    s = make_store()
    with pytest.raises(ShapeInvalidError):
        s.create(ObjectBase(value="nope", channels=[]), OWNER)


def test_deltas_cover_create_modify_delete():
    s = make_store()
    a = s.create(ObjectBase(value={"k": 1}, channels=["c"]), OWNER)
    b = s.create(ObjectBase(value={"k": 2}, channels=["c"]), OWNER)
    seq0 = s.snapshot_seq()
    c = s.create(ObjectBase(value={"k": 3}, channels=["c"]), OWNER)
    s.patch(a.url, [{"op": "replace", "path": "/value/k", "value": 9}], OWNER)
    s.delete(b.url, OWNER)
    deltas = s.deltas(seq0, ["c"], ANY, None)
    kinds = {(d.kind, (d.object or d.tombstone).url) for d in deltas}
    assert kinds == {("object", a.url), ("object", c.url), ("tombstone", b.url)}


def test_delta_tombstone_when_channel_removed():
    s = make_store()
    a = s.create(ObjectBase(value={}, channels=["c", "d"]), OWNER)
    seq0 = s.snapshot_seq()
    s.patch(a.url, [{"op": "remove", "path": "/channels/0"}], OWNER)
    deltas = s.deltas(seq0, ["c"], ANY, None)
    assert [d.kind for d in deltas] == ["tombstone"]
    # but the object still matches a query on its remaining channel
    deltas_d = s.deltas(seq0, ["d"], ANY, None)
    assert [d.kind for d in deltas_d] == ["object"]


def test_delta_ignores_objects_never_visible_to_viewer():
    s = make_store()
    seq0 = s.snapshot_seq()
    obj = s.create(ObjectBase(value={}, channels=["c"], allowed=[OTHER]), OWNER)
    s.delete(obj.url, OWNER)
    assert s.deltas(seq0, ["c"], ANY, None) == []  # anonymous never saw it


def test_created_and_deleted_between_cursors_is_silent():
    s = make_store()
    seq0 = s.snapshot_seq()
    obj = s.create(ObjectBase(value={}, channels=["c"]), OWNER)
    s.delete(obj.url, OWNER)
    assert s.deltas(seq0, ["c"], ANY, None) == []


def test_candidate_instrumentation_scales_with_channel_not_store():
    s = make_store()
    for i in range(300):
        s.create(ObjectBase(value={"i": i}, channels=[f"bulk{i % 30}"]), OWNER)
    s.create(ObjectBase(value={}, channels=["needle"]), OWNER)
    s.counters["objects_examined"] = 0
    s.snapshot(["needle"], ANY, None)
    assert s.counters["objects_examined"] == 1


def test_audit_after_random_ops_matches_recomputation_oracle():
    s = make_store()
    rng = random.Random(99)
    live = []
    for i in range(1000):
        roll = rng.random()
        if roll < 0.5 or not live:
            obj = s.create(
                ObjectBase(
                    value={"i": i},
                    channels=rng.sample(["a", "b", "c", "d"], rng.randint(0, 3)),
                ),
                rng.choice([OWNER, OTHER]),
            )
            live.append(obj)
        elif roll < 0.8:
            victim = rng.choice(live)
            victim = s.replace(
                victim.url,
                ObjectBase(value={"i": i}, channels=rng.sample(["a", "b", "z"], rng.randint(0, 2))),
                victim.actor,
            )
        else:
            victim = live.pop(rng.randrange(len(live)))
            s.delete(victim.url, victim.actor)
    assert s.audit() == []
    # independent recount: every live object is reachable via each of its channels
    for url, obj in s.objects.items():
        for c in obj.channels:
            assert url in s.channel_index[c]


def test_audit_names_corrupted_channel():
    s = make_store()
    s.create(ObjectBase(value={}, channels=["good"]), OWNER)
    s.channel_index["phantom"] = {"graffiti:local:bogus"}
    problems = s.audit()
    assert any("phantom" in p for p in problems)


def test_persistence_round_trip(tmp_path):
    path = str(tmp_path / "store.log")
    s1 = make_store(path=path)
    obj = s1.create(ObjectBase(value={"a": 1}, channels=["c"]), OWNER)
    s1.replace(obj.url, ObjectBase(value={"a": 2}, channels=["c"]), OWNER)
    s1.close()

    s2 = ObjectStore(lambda: "graffiti:local:x", path=path)
    again = s2.get(obj.url)
    assert again.value == {"a": 2}
    assert again.revision == 1
    assert s2.audit() == []


def test_persisted_deltas_survive_restart(tmp_path):
    path = str(tmp_path / "store.log")
    s1 = make_store(path=path)
    obj = s1.create(ObjectBase(value={}, channels=["c"]), OWNER)
    seq0 = s1.snapshot_seq()
    s1.delete(obj.url, OWNER)
    s1.close()

    s2 = ObjectStore(lambda: "graffiti:local:x", path=path)
    deltas = s2.deltas(seq0, ["c"], ANY, None)
    assert [d.kind for d in deltas] == ["tombstone"]


def test_compaction_preserves_state_and_recent_history(tmp_path):
    path = str(tmp_path / "store.log")
    clock = ManualClock()
    s1 = make_store(path=path, clock=clock)
    keep = s1.create(ObjectBase(value={"k": 1}, channels=["c"]), OWNER)
    gone = s1.create(ObjectBase(value={}, channels=["c"]), OWNER)
    seq0 = s1.snapshot_seq()
    clock.advance(1000)
    s1.delete(gone.url, OWNER)
    s1.compact()
    s1.close()

    s2 = ObjectStore(lambda: "graffiti:local:x", path=path, clock=clock)
    assert s2.get(keep.url).value == {"k": 1}
    deltas = s2.deltas(seq0, ["c"], ANY, None)
    assert [d.kind for d in deltas] == ["tombstone"]


def test_retention_prunes_tombstones_and_history():
    clock = ManualClock()
    s = make_store(clock=clock, retention_ms=1000)
    obj = s.create(ObjectBase(value={}, channels=["c"]), OWNER)
    s.delete(obj.url, OWNER)
    assert obj.url in s.tombstones
    clock.advance(2000)
    s.prune()
    assert obj.url not in s.tombstones
    assert obj.url not in s.history


def test_torn_tail_record_is_ignored(tmp_path):
    path = str(tmp_path / "store.log")
    s1 = make_store(path=path)
    obj = s1.create(ObjectBase(value={"a": 1}, channels=["c"]), OWNER)
    s1.close()
    with open(path, "ab") as fh:
        fh.write(b"\x00\x00\x00\xffgarbage")
    s2 = ObjectStore(lambda: "graffiti:local:x", path=path)
    assert s2.get(obj.url).value == {"a": 1}
