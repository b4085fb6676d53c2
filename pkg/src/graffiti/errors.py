"""Error taxonomy shared across the API and its implementations."""


class GraffitiError(Exception):
    """Base class for all errors raised by this package."""


# --- object model ---------------------------------------------------------

class MalformedUrlError(GraffitiError):
    pass


class LengthExceededError(GraffitiError):
    pass


class ShapeInvalidError(GraffitiError):
    """An object (or object base) violates the shape invariants."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class PatchError(GraffitiError):
    pass


class PathOutOfBoundsError(PatchError):
    """Patch path targets something other than value/channels/allowed."""


class MalformedOpError(PatchError):
    """Patch op is structurally invalid or cannot be applied."""


class ResultInvalidError(PatchError):
    """Patched object would violate the shape invariants."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


# --- schema filter --------------------------------------------------------

class SchemaCompileError(GraffitiError):
    pass


class UnsupportedKeywordError(SchemaCompileError):
    def __init__(self, keyword):
        super().__init__(f"unsupported schema keyword: {keyword!r}")
        self.keyword = keyword


class MalformedSchemaError(SchemaCompileError):
    pass


# --- API contract ---------------------------------------------------------

# Canonical serialization of a NotFound response. Byte-identical for
# missing, deleted, and forbidden objects so nothing leaks.
NOT_FOUND_WIRE = b'{"error":"not_found"}'


class AuthFailedError(GraffitiError):
    pass


class HomeUnavailableError(GraffitiError):
    pass


class SessionRevokedError(GraffitiError):
    pass


class NotAuthorizedError(GraffitiError):
    pass


class NotFoundError(GraffitiError):
    """Object missing, deleted, or not visible to the viewer.

    ``raw`` carries the serialized error exactly as produced by the
    implementation, so tests can assert indistinguishability on bytes.
    """

    def __init__(self, raw: bytes = NOT_FOUND_WIRE):
        super().__init__("not found")
        self.raw = raw


class CursorExpiredError(GraffitiError):
    """Continuation cursor is older than the tombstone retention window."""


# --- meta router ----------------------------------------------------------

class SchemeConflictError(GraffitiError):
    pass


class UnknownSchemeError(GraffitiError):
    pass


# --- back-end infrastructure ----------------------------------------------

class BindFailedError(GraffitiError):
    pass


class StorageUnavailableError(GraffitiError):
    pass


class TrackerUnavailableError(GraffitiError):
    pass


class BlobFetchFailedError(GraffitiError):
    pass


class UnsupportedAllowedError(GraffitiError):
    """Allowed lists are not supported on this back-end (cs v1)."""


class MalformedFileError(GraffitiError):
    pass


class ChannelMismatchError(GraffitiError):
    pass


class ActorMismatchError(GraffitiError):
    pass
