"""Exception types shared across the package."""


class SawError(Exception):
    """Base class for all errors raised by sawpanel."""


class UnbalancedPanel(SawError):
    """A (unit, time) cell is missing or holds a missing value."""


class DuplicateCell(SawError):
    """A (unit, time) cell appears more than once in the input."""


class NonNumericValue(SawError):
    """A data cell could not be coerced to a number."""


class ShapeMismatch(SawError):
    """Array dimensions are inconsistent with the panel layout."""


class RankDeficientFirstStage(SawError):
    """The first-stage instrument cross-product is singular."""


class NonDyadicLength(SawError):
    """A wavelet grid length is not a power of two."""


class IndexOutOfRange(SawError):
    """A wavelet (level, translation) index is outside the valid range."""


class SingularMatrix(SawError):
    """A design block is (numerically) singular."""


class NonRealResult(SawError):
    """A matrix function produced a non-negligible imaginary part."""


class EmptySegment(SawError):
    """A jump configuration produces a zero-length segment."""


class CollinearDesign(SawError):
    """A segment-interacted design column is degenerate."""


class SingularCrossProduct(SawError):
    """The instrument/regressor cross-product of the segment design is singular."""
