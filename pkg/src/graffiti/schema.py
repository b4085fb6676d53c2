"""JSON-Schema subset used by get and discover to filter objects.

A schema document constrains the whole object envelope: its top level
maps envelope field names (value, url, actor, channels, allowed,
revision) to subschemas, optionally combined with anyOf / allOf / not.
Subschemas use a fixed keyword subset with JSON Schema 2020-12 semantics.
Anything outside the subset is rejected at compile time rather than
silently accepted, so a typo cannot quietly match everything.

Absent ``additionalProperties: false``, schemas match objects carrying
extra unspecified properties, which is what lets applications grow new
properties without breaking each other.
"""
from __future__ import annotations

import copy
import re
from typing import Any, Callable, Union

from .errors import MalformedSchemaError, UnsupportedKeywordError
from .model import GraffitiObject

ENVELOPE_FIELDS = ("value", "url", "actor", "channels", "allowed", "revision")

_TYPE_NAMES = ("object", "array", "string", "number", "integer", "boolean", "null")

# Backreferences and lookaround are outside the supported regex class.
_UNSUPPORTED_RE = re.compile(r"\\[1-9]|\(\?P=|\(\?=|\(\?!|\(\?<")

_Pred = Callable[[Any], bool]


class CompiledMatcher:
    """Immutable predicate compiled from a schema document."""

    __slots__ = ("doc", "_pred")

    def __init__(self, doc, pred: _Pred):
        self.doc = doc
        self._pred = pred

    def matches(self, obj: Union[GraffitiObject, dict]) -> bool:
        wire = obj.to_wire() if isinstance(obj, GraffitiObject) else obj
        return self._pred(wire)


def compile_schema(doc) -> CompiledMatcher:
    """Compile a schema document into a matcher.

    Raises UnsupportedKeywordError (naming the keyword) or
    MalformedSchemaError; compilation never partially succeeds.
    """
    return CompiledMatcher(copy.deepcopy(doc), _compile_doc(doc))


def matches(matcher: CompiledMatcher, obj: Union[GraffitiObject, dict]) -> bool:
    return matcher.matches(obj)


def schema_doc(schema) -> dict:
    """Normalize a schema argument (doc, matcher, or None) to a plain doc."""
    if isinstance(schema, CompiledMatcher):
        return schema.doc
    return schema if schema is not None else {}


def json_equal(a, b) -> bool:
    """JSON-value equality: booleans are never equal to numbers."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    if isinstance(a, list):
        return (
            isinstance(b, list)
            and len(a) == len(b)
            and all(json_equal(x, y) for x, y in zip(a, b))
        )
    if isinstance(a, dict):
        return (
            isinstance(b, dict)
            and a.keys() == b.keys()
            and all(json_equal(v, b[k]) for k, v in a.items())
        )
    if type(a) is not type(b):
        return False
    return a == b


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_type(name: str, inst) -> bool:
    if name == "object":
        return isinstance(inst, dict)
    if name == "array":
        return isinstance(inst, list)
    if name == "string":
        return isinstance(inst, str)
    if name == "number":
        return _is_number(inst)
    if name == "integer":
        return _is_number(inst) and (
            isinstance(inst, int) or float(inst).is_integer()
        )
    if name == "boolean":
        return isinstance(inst, bool)
    return inst is None  # "null"


def _compile_doc(doc) -> _Pred:
    """Top level: envelope field map plus anyOf/allOf/not combinators."""
    if isinstance(doc, bool):
        return (lambda inst: True) if doc else (lambda inst: False)
    if not isinstance(doc, dict):
        raise MalformedSchemaError("schema must be a JSON object")
    preds: list[_Pred] = []
    for key, val in doc.items():
        if key in ENVELOPE_FIELDS:
            sub = _compile_sub(val)
            preds.append(
                lambda inst, k=key, s=sub: k not in inst or s(inst[k])
            )
        elif key == "anyOf":
            subs = [_compile_doc(d) for d in _schema_list(key, val)]
            preds.append(lambda inst, ss=subs: any(s(inst) for s in ss))
        elif key == "allOf":
            subs = [_compile_doc(d) for d in _schema_list(key, val)]
            preds.append(lambda inst, ss=subs: all(s(inst) for s in ss))
        elif key == "not":
            sub = _compile_doc(val)
            preds.append(lambda inst, s=sub: not s(inst))
        else:
            raise UnsupportedKeywordError(key)
    return lambda inst: all(p(inst) for p in preds)


def _schema_list(keyword: str, val) -> list:
    if not isinstance(val, list) or not val:
        raise MalformedSchemaError(f"{keyword} must be a non-empty list")
    return val


def _compile_sub(schema) -> _Pred:
    if isinstance(schema, bool):
        return (lambda inst: True) if schema else (lambda inst: False)
    if not isinstance(schema, dict):
        raise MalformedSchemaError("subschema must be an object or boolean")

    preds: list[_Pred] = []
    for key, val in schema.items():
        compiler = _KEYWORDS.get(key)
        if compiler is None:
            raise UnsupportedKeywordError(key)
        preds.append(compiler(val, schema))
    return lambda inst: all(p(inst) for p in preds)


def _kw_type(val, _schema) -> _Pred:
    names = [val] if isinstance(val, str) else val
    if not isinstance(names, list) or not names or any(
        n not in _TYPE_NAMES for n in names
    ):
        raise MalformedSchemaError(f"bad type keyword: {val!r}")
    names = list(names)
    return lambda inst: any(_check_type(n, inst) for n in names)


def _kw_const(val, _schema) -> _Pred:
    frozen = copy.deepcopy(val)
    return lambda inst: json_equal(inst, frozen)


def _kw_enum(val, _schema) -> _Pred:
    if not isinstance(val, list):
        raise MalformedSchemaError("enum must be a list")
    frozen = copy.deepcopy(val)
    return lambda inst: any(json_equal(inst, v) for v in frozen)


def _kw_required(val, _schema) -> _Pred:
    if not isinstance(val, list) or any(not isinstance(k, str) for k in val):
        raise MalformedSchemaError("required must be a list of strings")
    keys = list(val)
    return lambda inst: not isinstance(inst, dict) or all(k in inst for k in keys)


def _kw_properties(val, _schema) -> _Pred:
    if not isinstance(val, dict):
        raise MalformedSchemaError("properties must be an object")
    subs = {k: _compile_sub(v) for k, v in val.items()}
    return lambda inst: not isinstance(inst, dict) or all(
        k not in inst or s(inst[k]) for k, s in subs.items()
    )


def _kw_additional(val, schema) -> _Pred:
    if not isinstance(val, bool):
        raise MalformedSchemaError("additionalProperties supports the boolean form only")
    if val:
        return lambda inst: True
    named = set(schema.get("properties", {}) or {})
    return lambda inst: not isinstance(inst, dict) or set(inst) <= named


def _kw_items(val, _schema) -> _Pred:
    sub = _compile_sub(val)
    return lambda inst: not isinstance(inst, list) or all(sub(x) for x in inst)


def _numeric_bound(op) -> Callable[[Any, dict], _Pred]:
    def compiler(val, _schema) -> _Pred:
        if not _is_number(val):
            raise MalformedSchemaError("numeric bound must be a number")
        return lambda inst: not _is_number(inst) or op(inst, val)

    return compiler


def _length_bound(op) -> Callable[[Any, dict], _Pred]:
    def compiler(val, _schema) -> _Pred:
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise MalformedSchemaError("length bound must be a non-negative integer")
        return lambda inst: not isinstance(inst, str) or op(len(inst), val)

    return compiler


def _kw_pattern(val, _schema) -> _Pred:
    if not isinstance(val, str):
        raise MalformedSchemaError("pattern must be a string")
    if _UNSUPPORTED_RE.search(val):
        raise MalformedSchemaError(
            "pattern uses backreferences or lookaround, which are unsupported"
        )
    try:
        rx = re.compile(val)
    except re.error as exc:
        raise MalformedSchemaError(f"bad pattern: {exc}") from exc
    return lambda inst: not isinstance(inst, str) or rx.search(inst) is not None


def _kw_any_of(val, _schema) -> _Pred:
    subs = [_compile_sub(s) for s in _schema_list("anyOf", val)]
    return lambda inst: any(s(inst) for s in subs)


def _kw_all_of(val, _schema) -> _Pred:
    subs = [_compile_sub(s) for s in _schema_list("allOf", val)]
    return lambda inst: all(s(inst) for s in subs)


def _kw_not(val, _schema) -> _Pred:
    sub = _compile_sub(val)
    return lambda inst: not sub(inst)


_KEYWORDS: dict[str, Callable[[Any, dict], _Pred]] = {
    "type": _kw_type,
    "const": _kw_const,
    "enum": _kw_enum,
    "required": _kw_required,
    "properties": _kw_properties,
    "additionalProperties": _kw_additional,
    "items": _kw_items,
    "minimum": _numeric_bound(lambda x, b: x >= b),
    "maximum": _numeric_bound(lambda x, b: x <= b),
    "exclusiveMinimum": _numeric_bound(lambda x, b: x > b),
    "exclusiveMaximum": _numeric_bound(lambda x, b: x < b),
    "minLength": _length_bound(lambda n, b: n >= b),
    "maxLength": _length_bound(lambda n, b: n <= b),
    "pattern": _kw_pattern,
    "anyOf": _kw_any_of,
    "allOf": _kw_all_of,
    "not": _kw_not,
}
