"""Graffiti: channel-addressed mutable social objects with schema-filtered
discovery, over interchangeable decentralized back-ends."""

from .api import (
    ChannelStat,
    Delta,
    Graffiti,
    ObjectBase,
    PullStream,
    Session,
)
from .errors import GraffitiError
from .model import (
    GraffitiObject,
    ObjectUrl,
    Tombstone,
    apply_patch,
    concat_channels,
    mask_object,
    parse_url,
    validate_object_shape,
)
from .schema import CompiledMatcher, compile_schema, matches

__all__ = [
    "ChannelStat",
    "CompiledMatcher",
    "Delta",
    "Graffiti",
    "GraffitiError",
    "GraffitiObject",
    "ObjectBase",
    "ObjectUrl",
    "PullStream",
    "Session",
    "Tombstone",
    "apply_patch",
    "compile_schema",
    "concat_channels",
    "mask_object",
    "matches",
    "parse_url",
    "validate_object_shape",
]
