import json

import pytest

from graffiti.api import ObjectBase
from graffiti.commodity import (
    BlobHostApp,
    CommodityClient,
    FileSystemStorage,
    HttpStorage,
    MemoryBlobSpace,
    MemoryStorage,
    TrackerServer,
    channel_blob_path,
    tracker_announce,
    tracker_lookup,
    validate_channel_file,
)
from graffiti.errors import (
    ActorMismatchError,
    ChannelMismatchError,
    MalformedFileError,
    NotFoundError,
    UnsupportedAllowedError,
)
from graffiti.netsim import VirtualNet
from graffiti.store import ManualClock

TRACKER = "http://tracker.test"


@pytest.fixture()
def rig():
    net = VirtualNet()
    clock = ManualClock()
    tracker = TrackerServer(clock=clock)
    net.add(TRACKER, tracker)
    http = net.client()
    space = MemoryBlobSpace()

    def make_client():
        return CommodityClient(
            TRACKER,
            lambda handle: MemoryStorage(space, f"blobs/{handle}"),
            http=http,
            blob_space=space,
            clock=clock,
        )

    return net, clock, http, space, make_client


class TestTracker:
    def test_announce_lookup_round_trip(self, rig):
        _, _, http, _, _ = rig
        tracker_announce(TRACKER, "c1", "mem://x/f1.json", http=http)
        tracker_announce(TRACKER, "c1", "mem://y/f2.json", http=http)
        out = tracker_lookup(TRACKER, ["c1", "c2"], http=http)
        assert out == {"c1": ["mem://x/f1.json", "mem://y/f2.json"], "c2": []}

    def test_announce_is_idempotent_upsert(self, rig):
        _, _, http, _, _ = rig
        for _ in range(3):
            tracker_announce(TRACKER, "c", "mem://x/f.json", http=http)
        assert tracker_lookup(TRACKER, ["c"], http=http)["c"] == ["mem://x/f.json"]

    def test_ttl_expiry_via_clock_advance(self, rig):
        _, clock, http, _, _ = rig
        tracker_announce(TRACKER, "c", "mem://x/f.json", ttl=60, http=http)
        tracker_announce(TRACKER, "c", "mem://x/eternal.json", ttl=0, http=http)
        clock.advance(61_000)
        assert tracker_lookup(TRACKER, ["c"], http=http)["c"] == ["mem://x/eternal.json"]

    def test_malformed_announce_rejected(self, rig):
        _, _, http, _, _ = rig
        resp = http.post(TRACKER + "/announce", json={"channel": "c", "url": "no-scheme"})
        assert resp.status_code == 400
        resp = http.post(TRACKER + "/announce", json={"channel": "", "url": "mem://x/f"})
        assert resp.status_code == 400

    def test_empty_lookup_batch_rejected(self, rig):
        _, _, http, _, _ = rig
        resp = http.post(TRACKER + "/lookup", json={"channels": []})
        assert resp.status_code == 400
        with pytest.raises(ValueError):
            tracker_lookup(TRACKER, [], http=http)

    def test_records_survive_restart(self, tmp_path):
        path = str(tmp_path / "tracker.jsonl")
        t1 = TrackerServer(data_path=path)
        t1.announce("c", "mem://x/f.json", ttl=0)
        t1.close()
        t2 = TrackerServer(data_path=path)
        assert t2.lookup(["c"]) == {"c": ["mem://x/f.json"]}


class TestChannelFileValidation:
    def _file(self, **overrides):
        doc = {
            "formatVersion": 1,
            "actor": "cs:actor:alice",
            "channel": "c1",
            "updatedAt": 5,
            "objects": [
                {
                    "value": {"content": "x"},
                    "url": "graffiti:cs:mem%3A%2F%2Fblobs%2Falice%2Fobjects.json/aa",
                    "actor": "cs:actor:alice",
                    "channels": ["c1", "c2"],
                    "revision": 0,
                }
            ],
        }
        doc.update(overrides)
        return json.dumps(doc).encode()

    def test_well_formed_file_parses(self):
        cf = validate_channel_file(self._file(), "c1")
        assert cf.actor == "cs:actor:alice"
        assert len(cf.objects) == 1 and cf.objects[0].channels == ["c1", "c2"]

    def test_tombstone_entries_parse(self):
        data = self._file(
            objects=[{"tombstone": True, "url": "graffiti:cs:x%2Fo.json/bb", "deletedAt": 9}]
        )
        cf = validate_channel_file(data, "c1")
        assert cf.objects == [] and cf.tombstones[0].deleted_at == 9

    def test_file_for_wrong_channel_rejected(self):
        with pytest.raises(ChannelMismatchError):
            validate_channel_file(self._file(), "other")

    def test_object_missing_the_channel_rejected(self):
        doc = json.loads(self._file())
        doc["objects"][0]["channels"] = ["c2"]  # claims c1 membership it lacks
        with pytest.raises(ChannelMismatchError):
            validate_channel_file(json.dumps(doc).encode(), "c1")

    def test_object_by_other_actor_rejected(self):
        doc = json.loads(self._file())
        doc["objects"][0]["actor"] = "cs:actor:mallory"
        with pytest.raises(ActorMismatchError):
            validate_channel_file(json.dumps(doc).encode(), "c1")

    def test_malformed_files_rejected(self):
        for data in (b"not json", b"[]", self._file(formatVersion=2),
                     self._file(objects=[{"value": "scalar"}])):
            with pytest.raises(MalformedFileError):
                validate_channel_file(data, "c1")

    def test_partition_field_is_tolerated(self):
        cf = validate_channel_file(self._file(partition={"reserved": True}), "c1")
        assert cf.partition == {"reserved": True}


class TestCommodityClient:
    def test_cross_client_round_trip(self, rig):
        _, _, _, _, make_client = rig
        writer = make_client()
        alice = writer.login("alice")
        obj = writer.put(ObjectBase(value={"content": "pub"}, channels=["c"]), alice)
        reader = make_client()
        bob = reader.login("bob")
        assert [o.url for o in reader.discover(["c"], {}, bob)] == [obj.url]
        assert reader.get(obj.url, {}, bob).value == {"content": "pub"}

    def test_allowed_rejected_on_put_and_patch(self, rig):
        _, _, _, _, make_client = rig
        cs = make_client()
        alice = cs.login("alice")
        with pytest.raises(UnsupportedAllowedError):
            cs.put(ObjectBase(value={}, channels=["c"], allowed=["cs:actor:bob"]), alice)
        obj = cs.put(ObjectBase(value={}, channels=["c"]), alice)
        with pytest.raises(UnsupportedAllowedError):
            cs.patch(obj.url, [{"op": "add", "path": "/allowed", "value": []}], alice)

    def test_crosspost_writes_and_announces_both_files(self, rig):
        _, _, http, space, make_client = rig
        cs = make_client()
        alice = cs.login("alice")
        obj = cs.put(ObjectBase(value={"content": "x"}, channels=["c1", "c2"]), alice)
        lookup = tracker_lookup(TRACKER, ["c1", "c2"], http=http)
        assert len(lookup["c1"]) == 1 and len(lookup["c2"]) == 1
        for channel in ("c1", "c2"):
            blob = space.blobs[f"mem://blobs/alice/{channel_blob_path(channel)}"]
            cf = validate_channel_file(blob, channel)
            assert [o.url for o in cf.objects] == [obj.url]

        cs.delete(obj.url, alice)
        for channel in ("c1", "c2"):
            blob = space.blobs[f"mem://blobs/alice/{channel_blob_path(channel)}"]
            cf = validate_channel_file(blob, channel)
            assert cf.objects == []
            assert [t.url for t in cf.tombstones] == [obj.url]

    def test_channel_narrowing_leaves_tombstone_in_left_file(self, rig):
        _, _, _, space, make_client = rig
        cs = make_client()
        alice = cs.login("alice")
        obj = cs.put(ObjectBase(value={}, channels=["keep", "drop"]), alice)
        cs.patch(obj.url, [{"op": "remove", "path": "/channels/1"}], alice)
        dropped = validate_channel_file(
            space.blobs[f"mem://blobs/alice/{channel_blob_path('drop')}"], "drop"
        )
        assert dropped.objects == [] and dropped.tombstones[0].url == obj.url
        kept = validate_channel_file(
            space.blobs[f"mem://blobs/alice/{channel_blob_path('keep')}"], "keep"
        )
        assert [o.url for o in kept.objects] == [obj.url]

    def test_discover_request_budget(self, rig):
        net, _, http, _, make_client = rig
        cs = make_client()
        for handle in ("alice", "bob"):
            session = cs.login(handle)
            cs.put(ObjectBase(value={"by": handle}, channels=["c1"]), session)
            cs.put(ObjectBase(value={"by": handle}, channels=["c2"]), session)
        net.clear_log()
        reader = make_client()
        results = list(reader.discover(["c1", "c2"], {}))
        assert len(results) == 4
        tracker_requests = [r for r in net.request_log if r.origin == TRACKER]
        assert len(tracker_requests) == 1, "one tracker batch per discover"
        # blob fetches are mem:// reads here, so the only network traffic
        # a discover may produce is that single tracker batch
        assert len(net.request_log) == 1, "no other network traffic at all"

    def test_corrupt_file_becomes_warning_not_failure(self, rig):
        _, _, http, space, make_client = rig
        cs = make_client()
        alice = cs.login("alice")
        obj = cs.put(ObjectBase(value={"content": "good"}, channels=["c"]), alice)
        tracker_announce(TRACKER, "c", "mem://blobs/mallory/evil.json", http=http)
        space.blobs["mem://blobs/mallory/evil.json"] = b"{broken"
        stream = make_client().discover(["c"], {})
        assert [o.url for o in stream] == [obj.url]
        assert len(stream.warnings) == 1
        assert "mallory" in stream.warnings[0].origin

    def test_foreign_file_cannot_inject_other_actors_objects(self, rig):
        _, _, http, space, make_client = rig
        cs = make_client()
        alice = cs.login("alice")
        victim_obj = cs.put(ObjectBase(value={"content": "real"}, channels=["c"]), alice)
        # mallory crafts a file claiming to be alice's, in a channel the
        # contained object does not even list
        fake = {
            "formatVersion": 1,
            "actor": victim_obj.actor,
            "channel": "hijack",
            "updatedAt": 1,
            "objects": [dict(victim_obj.to_wire(), channels=["c"])],
        }
        space.blobs["mem://blobs/mallory/fake.json"] = json.dumps(fake).encode()
        tracker_announce(TRACKER, "hijack", "mem://blobs/mallory/fake.json", http=http)
        stream = make_client().discover(["hijack"], {})
        assert list(stream) == []
        assert stream.warnings, "the forged file must be rejected with a warning"

    def test_master_file_is_source_of_truth_for_get(self, rig):
        _, _, _, _, make_client = rig
        cs = make_client()
        alice = cs.login("alice")
        obj = cs.put(ObjectBase(value={"content": "v1"}, channels=["c"]), alice)
        cs.put(ObjectBase(value={"content": "v2"}, channels=["c"], url=obj.url), alice)
        fresh = make_client()
        got = fresh.get(obj.url, {})
        assert got.value == {"content": "v2"} and got.revision == 1

    def test_get_missing_blob_or_id_is_canonical_not_found(self, rig):
        _, _, _, _, make_client = rig
        cs = make_client()
        alice = cs.login("alice")
        obj = cs.put(ObjectBase(value={}, channels=["c"]), alice)
        blob_url, _ = CommodityClient.parse_cs_url(obj.url)
        raws = []
        for url in (
            obj.url.rsplit("/", 1)[0] + "/feedface",  # real blob, fake id
            "graffiti:cs:mem%3A%2F%2Fblobs%2Fnobody%2Fobjects.json/feedface",
        ):
            with pytest.raises(NotFoundError) as err:
                cs.get(url, {})
            raws.append(err.value.raw)
        assert raws[0] == raws[1]


class TestAdapters:
    def test_filesystem_adapter_round_trip(self, tmp_path, rig):
        _, _, http, _, _ = rig
        adapter = FileSystemStorage(str(tmp_path / "alice"))
        cs = CommodityClient(TRACKER, lambda h: adapter, http=http)
        alice = cs.login("alice")
        obj = cs.put(ObjectBase(value={"content": "fs"}, channels=["c"]), alice)
        assert obj.url.startswith("graffiti:cs:file%3A%2F%2F")
        reader = CommodityClient(TRACKER, lambda h: adapter, http=http)
        assert [o.value for o in reader.discover(["c"], {})] == [{"content": "fs"}]
        assert reader.get(obj.url, {}).value == {"content": "fs"}

    def test_http_adapter_against_blob_host(self, rig):
        net, _, http, _, _ = rig
        net.add("http://blobs.test", BlobHostApp())
        adapter = HttpStorage("http://blobs.test/alice", http=http)
        cs = CommodityClient(TRACKER, lambda h: adapter, http=http)
        alice = cs.login("alice")
        obj = cs.put(ObjectBase(value={"content": "webdav"}, channels=["c"]), alice)
        reader = CommodityClient(TRACKER, lambda h: adapter, http=http)
        assert [o.value for o in reader.discover(["c"], {})] == [{"content": "webdav"}]
        assert reader.get(obj.url, {}).value == {"content": "webdav"}
        adapter.delete_blob("objects.json")
        with pytest.raises(NotFoundError):
            reader.get(obj.url, {})


class TestFileCompleteness:
    def test_random_ops_keep_files_equal_to_recomputed_oracle(self, rig):
        import random

        _, _, _, space, make_client = rig
        rng = random.Random(31)
        cs = make_client()
        session = cs.login("alice")
        channels = ["f1", "f2", "f3"]
        shadow = {}  # url -> set of channels (the oracle bookkeeping)
        for step in range(120):
            roll = rng.random()
            if roll < 0.5 or not shadow:
                chans = rng.sample(channels, rng.randint(1, 2))
                obj = cs.put(ObjectBase(value={"s": step}, channels=chans), session)
                shadow[obj.url] = set(chans)
            elif roll < 0.8:
                url = rng.choice(list(shadow))
                chans = rng.sample(channels, rng.randint(0, 2))
                cs.put(ObjectBase(value={"s": step}, channels=chans, url=url), session)
                shadow[url] = set(chans)
            else:
                url = rng.choice(list(shadow))
                cs.delete(url, session)
                del shadow[url]
        for channel in channels:
            blob = space.blobs.get(f"mem://blobs/alice/{channel_blob_path(channel)}")
            in_file = set()
            if blob is not None:
                in_file = {o.url for o in validate_channel_file(blob, channel).objects}
            expected = {url for url, chans in shadow.items() if channel in chans}
            assert in_file == expected, f"channel {channel} file diverged"

    def test_tombstone_entries_survive_until_retention(self, rig):
        _, clock, _, space, make_client = rig
        retention = 1000 * 60
        cs = CommodityClient(
            TRACKER,
            lambda handle: MemoryStorage(space, f"blobs/{handle}"),
            http=rig[2],
            blob_space=space,
            clock=clock,
            retention_ms=retention,
        )
        session = cs.login("ttl")
        victim = cs.put(ObjectBase(value={}, channels=["c"]), session)
        cs.delete(victim.url, session)

        def stones():
            blob = space.blobs[f"mem://blobs/ttl/{channel_blob_path('c')}"]
            return [t.url for t in validate_channel_file(blob, "c").tombstones]

        assert stones() == [victim.url]
        clock.advance(retention - 1)
        cs.put(ObjectBase(value={}, channels=["c"]), session)  # rewrite within window
        assert victim.url in stones(), "tombstone must outlive the retention window"
        clock.advance(retention + 1)
        cs.put(ObjectBase(value={}, channels=["c"]), session)  # rewrite past window
        assert victim.url not in stones(), "expired tombstones are pruned on rewrite"
