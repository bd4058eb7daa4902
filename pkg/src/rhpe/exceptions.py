"""Exception hierarchy shared by all solver modules."""


class RhpeError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(RhpeError, ValueError):
    """Non-finite coordinates, mismatched dimensions or out-of-range scalars."""


class InvalidSetError(InvalidInputError):
    """A set description is empty or degenerate (e.g. ``lo > hi``)."""


class InvalidConfigError(InvalidInputError):
    """Solver tolerances or parameters violate their documented ranges."""


class NotMonotoneError(InvalidInputError):
    """An operator failed the numerical monotonicity check."""


class DegenerateRegularizationError(InvalidInputError):
    """A rate constant was requested with zero regularization."""


class UnsupportedProblemError(RhpeError):
    """The problem lacks the structure an operation needs."""


class CertificateViolationError(RhpeError):
    """A step produced a triple that fails the relative-error inequality."""


class BrokenConvexityError(CertificateViolationError):
    """The convexity gap of a prox step came out negative."""


class NumericFailureError(RhpeError):
    """Iterates left the region where floating point results are trustworthy."""


class InvalidComparisonError(RhpeError):
    """Two sweeps cannot be compared (different problems or grids)."""
