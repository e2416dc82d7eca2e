"""Exception types shared across the package."""


class DogsplatError(Exception):
    """Base class for all package errors."""


class ParseError(DogsplatError):
    """Malformed input file. Carries a byte offset or line number when known."""

    def __init__(self, message, *, offset=None, line=None):
        loc = ""
        if offset is not None:
            loc = f" (byte offset {offset})"
        elif line is not None:
            loc = f" (line {line})"
        super().__init__(message + loc)
        self.offset = offset
        self.line = line


class SchemaError(DogsplatError):
    """File is parseable but lacks required fields."""

    def __init__(self, message, missing=()):
        if missing:
            message = f"{message}: missing {', '.join(missing)}"
        super().__init__(message)
        self.missing = tuple(missing)


class UnsupportedFormatError(DogsplatError):
    """Image file is not 8-bit RGB."""


class UnknownKeyError(DogsplatError):
    """Config file contains a key that is not part of the schema."""


class RangeError(DogsplatError):
    """Value is outside its documented range."""


class NonInvertibleError(DogsplatError):
    """2x2 covariance is numerically singular; the splat should be culled."""


class InvalidExponentError(DogsplatError):
    """Radial weight exponent must be positive."""


class RatioOutOfRangeError(DogsplatError):
    """Prune ratio must lie in (0, 1)."""


class AllZeroScoresError(DogsplatError):
    """Both score vectors have zero norm; fall back to opacity ranking."""


class ProtocolViolationError(DogsplatError):
    """Scheduler received a loss value it did not ask for."""


class DimensionMismatchError(DogsplatError):
    """Image pair shapes differ."""


class EmptyDatasetError(DogsplatError):
    """Operation requires at least one view."""
