"""Exception hierarchy shared by all semconmf modules."""


class SemconmfError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(SemconmfError):
    """A file does not look like the expected format (magic, version, dtype)."""


class CorruptFile(SemconmfError):
    """A file has the right format markers but inconsistent contents."""


class InvalidInput(SemconmfError):
    """An in-memory argument violates a documented precondition."""


class EmptyBank(SemconmfError):
    """An anchor bank with zero entries was supplied or loaded."""


class DimensionMismatch(SemconmfError):
    """Matrix shapes are incompatible for the requested operation."""


class Degenerate(SemconmfError):
    """A vector with zero norm was passed where a direction is required."""


class DivergenceError(SemconmfError):
    """The optimization produced a non-finite loss.

    Carries the iteration index at which the divergence was detected.
    """

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class SegmenterError(SemconmfError):
    """An external segmenter implementation failed or misbehaved."""


class NotFound(SemconmfError):
    """A requested result or sample does not exist on disk."""
