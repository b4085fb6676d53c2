import json

import pytest
from hypothesis import given, settings, strategies as st

from graffiti.errors import (
    LengthExceededError,
    MalformedOpError,
    MalformedUrlError,
    PathOutOfBoundsError,
    ResultInvalidError,
)
from graffiti.model import (
    GraffitiObject,
    concat_channels,
    apply_patch,
    mask_object,
    parse_url,
    split_concat,
    validate_object_shape,
    visible_to,
)


def obj(**kw):
    defaults = dict(
        value={"content": "hello"},
        url="graffiti:local:abc",
        actor="graffiti:local:actor/alice",
        channels=["a", "b"],
        allowed=None,
        revision=0,
    )
    defaults.update(kw)
    return GraffitiObject(**defaults)


class TestValidateObjectShape:
    def test_like_activity_is_valid(self):
        like = obj(
            value={
                "activity": "Like",
                "target": "graffiti:remote:pod.graffiti.garden/123",
            },
            url="graffiti:remote:pod.graffiti.garden/456",
            actor="https://alice.example.com",
            channels=["graffiti:remote:pod.graffiti.garden/123"],
        )
        assert validate_object_shape(like) == []

    def test_top_level_string_value(self):
        assert validate_object_shape(obj(value="hello")) == [
            "value must be a JSON object"
        ]

    def test_duplicate_channels(self):
        assert validate_object_shape(obj(channels=["a", "a"])) == [
            "channels entries must be unique"
        ]

    def test_violations_are_ordered_by_field(self):
        bad = obj(value=[], url="nope", channels=["x", "x"], revision=-1)
        out = validate_object_shape(bad)
        assert out == [
            "value must be a JSON object",
            "url must be a valid graffiti object URL",
            "channels entries must be unique",
            "revision must be a non-negative integer",
        ]

    def test_duplicate_allowed(self):
        bad = obj(allowed=["https://a.example", "https://a.example"])
        assert validate_object_shape(bad) == ["allowed entries must be unique"]

    def test_channel_length_limits(self):
        assert validate_object_shape(obj(channels=[""])) != []
        assert validate_object_shape(obj(channels=["x" * 2048])) == []
        assert validate_object_shape(obj(channels=["x" * 2049])) != []

    def test_revision_bool_rejected(self):
        assert validate_object_shape(obj(revision=True)) == [
            "revision must be a non-negative integer"
        ]


class TestMaskObject:
    def test_owner_sees_everything(self):
        o = obj(channels=["a", "b"], allowed=["graffiti:local:actor/bob"])
        m = mask_object(o, o.actor, ["a"])
        assert m.channels == ["a", "b"]
        assert m.allowed == ["graffiti:local:actor/bob"]

    def test_nonowner_channel_intersection_matches_set_oracle(self):
        # oracle: plain set intersection, over every subset pair of <=3 channels
        universe = ["a", "b", "c"]
        subsets = [
            [c for k, c in enumerate(universe) if i & (1 << k)] for i in range(8)
        ]
        for have in subsets:
            for queried in subsets:
                o = obj(channels=have)
                m = mask_object(o, "graffiti:local:actor/stranger", queried)
                assert set(m.channels) == set(have) & set(queried)

    def test_masked_allowed_shows_only_viewer(self):
        # oracle: enumerate every viewer against a fixed allowed list
        allowed = ["graffiti:local:actor/alice", "graffiti:local:actor/bob"]
        o = obj(actor="graffiti:local:actor/owner", allowed=allowed)
        for viewer in allowed + ["graffiti:local:actor/eve", None]:
            m = mask_object(o, viewer, [])
            if viewer == o.actor:
                assert m.allowed == allowed
            elif viewer is None:
                assert m.allowed == []
            else:
                assert m.allowed == [viewer]

    def test_get_by_url_masks_all_channels(self):
        m = mask_object(obj(channels=["a", "b"]), "graffiti:local:actor/x", [])
        assert m.channels == []

    def test_public_object_keeps_allowed_absent(self):
        m = mask_object(obj(allowed=None), "graffiti:local:actor/x", ["a"])
        assert m.allowed is None


@st.composite
def graffiti_objects(draw):
    channels = draw(
        st.lists(st.sampled_from(["a", "b", "c", "d"]), unique=True, max_size=4)
    )
    allowed = draw(
        st.one_of(
            st.none(),
            st.lists(
                st.sampled_from(
                    [
                        "graffiti:local:actor/v1",
                        "graffiti:local:actor/v2",
                        "graffiti:local:actor/owner",
                    ]
                ),
                unique=True,
                max_size=3,
            ),
        )
    )
    return obj(
        actor="graffiti:local:actor/owner",
        channels=channels,
        allowed=allowed,
        revision=draw(st.integers(min_value=0, max_value=9)),
    )


viewers = st.sampled_from(
    [None, "graffiti:local:actor/owner", "graffiti:local:actor/v1", "graffiti:local:actor/v2"]
)
queries = st.lists(st.sampled_from(["a", "b", "c", "x"]), unique=True, max_size=4)


@given(graffiti_objects(), viewers, queries)
def test_masking_idempotent(o, viewer, queried):
    once = mask_object(o, viewer, queried)
    twice = mask_object(once, viewer, queried)
    assert once.to_wire() == twice.to_wire()


@given(graffiti_objects(), viewers, queries)
def test_masking_never_widens(o, viewer, queried):
    m = mask_object(o, viewer, queried)
    if viewer != o.actor:
        assert set(m.channels) <= set(o.channels)
        assert set(m.channels) <= set(queried)
        if o.allowed is not None:
            assert set(m.allowed) <= ({viewer} if viewer else set())
    assert (m.value, m.url, m.actor, m.revision) == (
        o.value,
        o.url,
        o.actor,
        o.revision,
    )


class TestVisibleTo:
    def test_public_visible_to_anyone(self):
        assert visible_to(obj(), None)

    def test_restricted_hidden_from_outsiders(self):
        o = obj(allowed=["graffiti:local:actor/friend"])
        assert not visible_to(o, None)
        assert not visible_to(o, "graffiti:local:actor/eve")
        assert visible_to(o, "graffiti:local:actor/friend")
        assert visible_to(o, o.actor)

    def test_empty_allowed_is_owner_only(self):
        o = obj(allowed=[])
        assert visible_to(o, o.actor)
        assert not visible_to(o, "graffiti:local:actor/eve")


class TestApplyPatch:
    def test_replace_value_content(self):
        out = apply_patch(obj(), [{"op": "replace", "path": "/value/content", "value": "hi"}])
        assert out.value == {"content": "hi"}

    def test_crosspost_appends_channel(self):
        o = obj(channels=["The Glue Factory"])
        out = apply_patch(o, [{"op": "add", "path": "/channels/-", "value": "Glitter"}])
        assert out.channels == ["The Glue Factory", "Glitter"]

    def test_remove_allowed_makes_public(self):
        o = obj(allowed=["graffiti:local:actor/alice"])
        out = apply_patch(o, [{"op": "remove", "path": "/allowed"}])
        # oracle: the serialized result equals the object rebuilt without allowed
        assert out.to_wire() == obj(allowed=None).to_wire()

    def test_meta_fields_are_out_of_bounds(self):
        for path in ("/url", "/actor", "/revision", "/nonsense"):
            with pytest.raises(PathOutOfBoundsError):
                apply_patch(obj(), [{"op": "replace", "path": path, "value": "x"}])

    def test_unsupported_op(self):
        with pytest.raises(MalformedOpError):
            apply_patch(obj(), [{"op": "test", "path": "/value/content", "value": "hello"}])

    def test_result_invalid_on_duplicate_channel(self):
        o = obj(channels=["a"])
        with pytest.raises(ResultInvalidError):
            apply_patch(o, [{"op": "add", "path": "/channels/-", "value": "a"}])

    def test_input_untouched_on_failure(self):
        o = obj(channels=["a"])
        before = json.dumps(o.to_wire(), sort_keys=True)
        ops = [
            {"op": "replace", "path": "/value/content", "value": "changed"},
            {"op": "remove", "path": "/value/missing"},
        ]
        with pytest.raises(MalformedOpError):
            apply_patch(o, ops)
        assert json.dumps(o.to_wire(), sort_keys=True) == before

    def test_pointer_escapes(self):
        o = obj(value={"a/b": 1, "t~e": 2})
        out = apply_patch(o, [{"op": "remove", "path": "/value/a~1b"}])
        assert out.value == {"t~e": 2}
        out = apply_patch(o, [{"op": "replace", "path": "/value/t~0e", "value": 3}])
        assert out.value["t~e"] == 3

    def test_array_index_ops(self):
        o = obj(channels=["a", "b", "c"])
        out = apply_patch(o, [{"op": "remove", "path": "/channels/1"}])
        assert out.channels == ["a", "c"]
        out = apply_patch(o, [{"op": "add", "path": "/channels/0", "value": "z"}])
        assert out.channels == ["z", "a", "b", "c"]
        with pytest.raises(MalformedOpError):
            apply_patch(o, [{"op": "add", "path": "/channels/9", "value": "z"}])


patch_ops = st.lists(
    st.one_of(
        st.builds(
            lambda v: {"op": "replace", "path": "/value/content", "value": v},
            st.text(max_size=5),
        ),
        st.builds(
            lambda c: {"op": "add", "path": "/channels/-", "value": c},
            st.sampled_from(["a", "x", "y"]),
        ),
        st.just({"op": "remove", "path": "/channels/0"}),
        st.just({"op": "remove", "path": "/value/missing"}),
        st.just({"op": "replace", "path": "/url", "value": "boom"}),
    ),
    max_size=4,
)


@given(graffiti_objects(), patch_ops)
@settings(max_examples=200)
def test_patch_atomicity(o, ops):
    before = json.dumps(o.to_wire(), sort_keys=True)
    try:
        out = apply_patch(o, ops)
    except Exception:
        out = None
    assert json.dumps(o.to_wire(), sort_keys=True) == before
    if out is not None:
        assert validate_object_shape(out) == []


class TestParseUrl:
    def test_remote_example(self):
        u = parse_url("graffiti:remote:pod.graffiti.garden/123")
        assert (u.scheme, u.suffix) == ("remote", "pod.graffiti.garden/123")

    def test_local_example(self):
        u = parse_url("graffiti:local:abc")
        assert (u.scheme, u.suffix) == ("local", "abc")

    def test_https_rejected(self):
        with pytest.raises(MalformedUrlError):
            parse_url("https://example.com/x")

    def test_unknown_scheme_rejected(self):
        with pytest.raises(MalformedUrlError):
            parse_url("graffiti:ftp:whatever")

    def test_empty_suffix_rejected(self):
        with pytest.raises(MalformedUrlError):
            parse_url("graffiti:local:")

    def test_remote_requires_authority_and_id(self):
        for bad in ("graffiti:remote:hostonly", "graffiti:remote:/id", "graffiti:remote:host/"):
            with pytest.raises(MalformedUrlError):
                parse_url(bad)


@given(
    st.sampled_from(["local", "cs"]),
    st.text(min_size=1, max_size=30).filter(lambda s: s.strip() and " " not in s),
)
def test_parse_url_round_trip(scheme, suffix):
    text = f"graffiti:{scheme}:{suffix}"
    try:
        u = parse_url(text)
    except MalformedUrlError:
        return
    assert str(u) == text


class TestConcatChannels:
    def test_dating_zip_example(self):
        assert concat_channels(["dating", "zip:12345"]) == "dating+zip:12345"

    def test_single_part_rejected(self):
        with pytest.raises(ValueError):
            concat_channels(["a"])

    def test_plus_is_escaped(self):
        assert concat_channels(["x+y", "z"]) == "x%2By+z"

    def test_length_cap(self):
        with pytest.raises(LengthExceededError):
            concat_channels(["x" * 1500, "y" * 1500])


@given(
    st.lists(
        st.text(
            alphabet=st.sampled_from(list("ab+%2B5")), min_size=1, max_size=6
        ),
        min_size=2,
        max_size=4,
    )
)
def test_concat_injective_via_decode_oracle(parts):
    name = concat_channels(parts)
    assert split_concat(name) == parts
