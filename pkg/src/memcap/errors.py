"""Exception types shared across the synthesis pipeline."""


class MemcapError(Exception):
    """Base class for all package errors."""


class RangeError(MemcapError):
    """An index or argument is outside its documented range."""


class DimensionMismatch(MemcapError):
    """Vector/matrix shapes do not chain."""


class PrecisionExhausted(MemcapError):
    """Interval refinement hit the precision cap without resolving."""


class SearchExhausted(MemcapError):
    """Randomized search (plus deterministic fallback) ran out of retries."""


class DegenerateData(MemcapError):
    """The dataset cannot supply a required separation quantity."""


class NotDistinct(MemcapError):
    """Inputs that must be pairwise distinct are not."""


class ConsistencyError(MemcapError):
    """Two inputs share a memorization key but carry different labels."""

    def __init__(self, message, first=None, second=None):
        super().__init__(message)
        self.first = first
        self.second = second


class GapViolation(MemcapError):
    """Scalar inputs violate the minimum pairwise gap of 2."""


class PreconditionViolation(MemcapError):
    """A crafted-weight precondition failed at build time."""


class SchemaError(MemcapError):
    """A dataset or weight file does not match its schema."""
