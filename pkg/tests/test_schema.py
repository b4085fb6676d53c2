import random

import pytest
from hypothesis import given, settings, strategies as st
from jsonschema import Draft202012Validator

from graffiti.errors import MalformedSchemaError, UnsupportedKeywordError
from graffiti.model import GraffitiObject
from graffiti.schema import ENVELOPE_FIELDS, compile_schema, matches

ALICE = "https://alice.example.com"
ME = "graffiti:local:actor/me"

DM_SCHEMA = {
    "value": {
        "required": ["content", "published", "to"],
        "properties": {
            "content": {"type": "string"},
            "published": {"type": "number", "minimum": 100},
            "to": {"const": ME},
        },
    },
    "actor": {"const": ALICE},
}


def wire(value, actor=ALICE, channels=(ME,), allowed=None, revision=0):
    out = {
        "value": value,
        "url": "graffiti:remote:pod.example.com/1",
        "actor": actor,
        "channels": list(channels),
    }
    if allowed is not None:
        out["allowed"] = list(allowed)
    out["revision"] = revision
    return out


def to_standard(doc):
    """Translate the envelope-map grammar to plain JSON Schema for the oracle."""
    if isinstance(doc, bool):
        return doc
    props = {}
    out = {}
    for key, val in doc.items():
        if key in ENVELOPE_FIELDS:
            props[key] = val
        elif key in ("anyOf", "allOf"):
            out[key] = [to_standard(d) for d in val]
        elif key == "not":
            out[key] = to_standard(val)
    if props:
        out["properties"] = props
    return out


def oracle(doc, instance) -> bool:
    return Draft202012Validator(to_standard(doc)).is_valid(instance)


class TestCompile:
    def test_get_listing_schema_compiles(self):
        m = compile_schema(
            {"value": {"required": ["content"], "properties": {"content": {"type": "string"}}}}
        )
        assert m.matches(wire({"content": "hi"}))
        assert not m.matches(wire({"published": 1}))

    def test_empty_schema_matches_everything(self):
        m = compile_schema({})
        assert m.matches(wire({"anything": [1, 2, {"x": None}]}))

    def test_unsupported_keyword_named(self):
        with pytest.raises(UnsupportedKeywordError) as err:
            compile_schema({"value": {"if": {}}})
        assert err.value.keyword == "if"

    def test_unknown_envelope_key_rejected(self):
        with pytest.raises(UnsupportedKeywordError):
            compile_schema({"bogus": {}})

    def test_dollar_ref_rejected(self):
        with pytest.raises(UnsupportedKeywordError):
            compile_schema({"value": {"$ref": "#/x"}})

    def test_malformed_required(self):
        with pytest.raises(MalformedSchemaError):
            compile_schema({"value": {"required": "content"}})

    def test_nonboolean_additional_properties(self):
        with pytest.raises(MalformedSchemaError):
            compile_schema({"value": {"additionalProperties": {"type": "string"}}})

    def test_backreference_pattern_rejected(self):
        with pytest.raises(MalformedSchemaError):
            compile_schema({"value": {"properties": {"x": {"pattern": r"(a)\1"}}}})

    def test_matcher_is_pure(self):
        m = compile_schema(DM_SCHEMA)
        msg = wire({"content": "x", "published": 200, "to": ME})
        assert m.matches(msg) == m.matches(msg) is True


class TestDmSchema:
    def test_conforming_dm_matches(self):
        msg = wire({"content": "alice → me", "published": 500, "to": ME})
        assert matches(compile_schema(DM_SCHEMA), msg)

    def test_missing_to_rejected(self):
        msg = wire({"content": "x", "published": 500})
        assert not matches(compile_schema(DM_SCHEMA), msg)

    def test_wrong_actor_rejected(self):
        msg = wire({"content": "x", "published": 500, "to": ME}, actor="https://eve.example.com")
        assert not matches(compile_schema(DM_SCHEMA), msg)

    def test_minimum_boundary_against_independent_evaluator(self):
        doc = {"value": {"properties": {"published": {"type": "number", "minimum": 100}}}}
        m = compile_schema(doc)
        for published, expect in ((99, False), (100, True), (101, True)):
            instance = wire({"published": published})
            assert m.matches(instance) is expect
            assert oracle(doc, instance) is expect

    def test_matches_graffiti_object_directly(self):
        obj = GraffitiObject(
            value={"content": "x", "published": 500, "to": ME},
            url="graffiti:local:1",
            actor=ALICE,
            channels=[ME],
        )
        assert compile_schema(DM_SCHEMA).matches(obj)


class TestKeywordSemantics:
    def test_integer_accepts_integral_float(self):
        m = compile_schema({"revision": {"type": "integer"}})
        assert m.matches(wire({}, revision=0))
        doc = {"value": {"properties": {"n": {"type": "integer"}}}}
        assert compile_schema(doc).matches(wire({"n": 2.0}))
        assert not compile_schema(doc).matches(wire({"n": 2.5}))

    def test_bool_is_not_a_number(self):
        doc = {"value": {"properties": {"n": {"type": "number"}}}}
        inst = wire({"n": True})
        assert compile_schema(doc).matches(inst) is oracle(doc, inst) is False

    def test_const_distinguishes_bool_from_one(self):
        doc = {"value": {"properties": {"n": {"const": 1}}}}
        for n, expect in ((1, True), (True, False), (1.0, True)):
            inst = wire({"n": n})
            assert compile_schema(doc).matches(inst) is expect
            assert oracle(doc, inst) is expect

    def test_additional_properties_false(self):
        doc = {"value": {"properties": {"a": {}}, "additionalProperties": False}}
        assert compile_schema(doc).matches(wire({"a": 1}))
        assert not compile_schema(doc).matches(wire({"a": 1, "b": 2}))

    def test_items_applies_to_every_element(self):
        doc = {"channels": {"items": {"pattern": "^chan"}}}
        assert compile_schema(doc).matches(wire({}, channels=["chan1", "chan2"]))
        assert not compile_schema(doc).matches(wire({}, channels=["chan1", "other"]))

    def test_pattern_is_unanchored_search(self):
        doc = {"value": {"properties": {"s": {"pattern": "bc"}}}}
        inst = wire({"s": "abcd"})
        assert compile_schema(doc).matches(inst) is oracle(doc, inst) is True

    def test_combinators_at_top_level(self):
        doc = {
            "anyOf": [
                {"value": {"required": ["content"]}},
                {"value": {"required": ["activity"]}},
            ]
        }
        m = compile_schema(doc)
        assert m.matches(wire({"content": "x"}))
        assert m.matches(wire({"activity": "Like"}))
        assert not m.matches(wire({"other": 1}))

    def test_not_combinator(self):
        doc = {"not": {"actor": {"const": ALICE}}}
        assert not compile_schema(doc).matches(wire({}))
        assert compile_schema(doc).matches(wire({}, actor="https://bob.example.com"))

    def test_absent_allowed_passes_allowed_constraints(self):
        doc = {"allowed": {"items": {"const": ME}}}
        assert compile_schema(doc).matches(wire({}))  # public object
        assert compile_schema(doc).matches(wire({}, allowed=[ME]))
        assert not compile_schema(doc).matches(wire({}, allowed=["https://x.example"]))


# -- folksonomy-friendliness properties --------------------------------------

simple_values = st.dictionaries(
    st.sampled_from(["content", "published", "to", "activity", "tags"]),
    st.one_of(st.text(max_size=6), st.integers(-5, 5), st.booleans()),
    max_size=4,
)


@given(simple_values, st.text(min_size=1, max_size=8))
def test_extra_properties_never_flip_a_match(value, extra_key):
    doc = {"value": {"required": ["content"], "properties": {"content": {}}}}
    m = compile_schema(doc)
    base = dict(value)
    base["content"] = "x"
    extended = dict(base)
    extended.setdefault(extra_key, "unrelated")
    assert m.matches(wire(base))
    assert m.matches(wire(extended))


@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), unique=True, min_size=1, max_size=4))
def test_monotone_required(keys):
    full_doc = {"value": {"required": keys}}
    value = {k: 1 for k in keys}
    assert compile_schema(full_doc).matches(wire(value))
    for i in range(len(keys)):
        weaker = {"value": {"required": keys[:i] + keys[i + 1:]}}
        assert compile_schema(weaker).matches(wire(value))


# -- oracle equivalence over a generated corpus -------------------------------

def _gen_subschema(rng: random.Random, depth: int) -> dict:
    kind = rng.randrange(8 if depth else 6)
    if kind == 0:
        return {"type": rng.choice(["string", "number", "integer", "boolean", "object", "array", "null"])}
    if kind == 1:
        return {"const": _gen_value(rng, 1)}
    if kind == 2:
        return {"enum": [_gen_value(rng, 1) for _ in range(rng.randint(1, 3))]}
    if kind == 3:
        bound = rng.choice(["minimum", "maximum", "exclusiveMinimum", "exclusiveMaximum"])
        return {"type": "number", bound: rng.randint(-3, 3)}
    if kind == 4:
        bound = rng.choice(["minLength", "maxLength"])
        return {bound: rng.randint(0, 4)}
    if kind == 5:
        return {"pattern": rng.choice(["^a", "b$", "ab", "^x{1,2}$", "[0-9]+"])}
    if kind == 6:
        out = {
            "required": rng.sample(["p", "q", "r"], rng.randint(0, 2)),
            "properties": {
                k: _gen_subschema(rng, depth - 1)
                for k in rng.sample(["p", "q", "r"], rng.randint(0, 3))
            },
        }
        if rng.random() < 0.3:
            out["additionalProperties"] = rng.random() < 0.5
        return out
    comb = rng.choice(["anyOf", "allOf", "not"])
    if comb == "not":
        return {"not": _gen_subschema(rng, depth - 1)}
    return {comb: [_gen_subschema(rng, depth - 1) for _ in range(rng.randint(1, 2))]}


def _gen_value(rng: random.Random, depth: int):
    kind = rng.randrange(7 if depth else 5)
    if kind == 0:
        return rng.choice(["", "a", "ab", "xx", "yes"])
    if kind == 1:
        return rng.randint(-3, 3)
    if kind == 2:
        return rng.choice([0.5, 2.0, -1.5])
    if kind == 3:
        return rng.random() < 0.5
    if kind == 4:
        return None
    if kind == 5:
        return [_gen_value(rng, depth - 1) for _ in range(rng.randint(0, 3))]
    return {
        k: _gen_value(rng, depth - 1)
        for k in rng.sample(["p", "q", "r", "s"], rng.randint(0, 3))
    }


def test_oracle_equivalence_on_generated_corpus():
    rng = random.Random(20260810)
    disagreements = []
    for i in range(1200):
        doc = {}
        for field in rng.sample(["value", "actor", "channels", "revision", "allowed"], rng.randint(0, 3)):
            doc[field] = _gen_subschema(rng, 2)
        if rng.random() < 0.2:
            doc = {"anyOf": [doc or {"value": {"type": "object"}}, {"actor": {"const": ALICE}}]}
        instance = wire(
            {k: _gen_value(rng, 2) for k in rng.sample(["p", "q", "r"], rng.randint(0, 3))},
            actor=rng.choice([ALICE, "https://bob.example.com"]),
            channels=rng.sample(["a", "b", "c"], rng.randint(0, 3)),
            allowed=rng.choice([None, [ALICE]]),
            revision=rng.randint(0, 3),
        )
        ours = compile_schema(doc).matches(instance)
        theirs = oracle(doc, instance)
        if ours != theirs:
            disagreements.append((i, doc, instance, ours, theirs))
    assert not disagreements, disagreements[:3]
