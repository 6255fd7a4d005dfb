"""Exception hierarchy for the osplines package.

Every error raised by the library derives from :class:`OSplineError` so
callers can catch broadly; individual classes also derive from the closest
builtin (``ValueError`` for bad arguments, ``RuntimeError`` for numerical
failures) to stay friendly to generic handling.
"""


class OSplineError(Exception):
    """Base class for all osplines errors."""


# --- argument / construction errors -----------------------------------------

class InvalidKnots(OSplineError, ValueError):
    """Knot sequence violates ordering or range requirements."""


class InvalidOrder(OSplineError, ValueError):
    """Spline or difference order is out of range for the operation."""


class UnsupportedOrder(OSplineError, ValueError):
    """Penalty order m outside the tabulated range 1..4."""


class InsufficientData(OSplineError, ValueError):
    """Not enough (unique) data values for the requested knot count."""


class DegenerateKnots(OSplineError, ValueError):
    """Quantile knot placement produced duplicate interior knots."""


class InvalidInput(OSplineError, ValueError):
    """Generic invalid argument (non-finite values, bad sizes)."""


class InvalidDerivative(OSplineError, ValueError):
    """Requested derivative order exceeds the spline degree."""


class OutsideSupport(OSplineError, ValueError):
    """Evaluation point outside [a, b] without extrapolation enabled."""


class InvalidLambda(OSplineError, ValueError):
    """Smoothing parameter must be strictly positive."""


class InfeasibleTarget(OSplineError, ValueError):
    """Requested effective degrees of freedom outside the attainable range."""


class Unidentifiable(OSplineError, ValueError):
    """Model structure cannot separate the requested effects."""


class DegenerateResponse(OSplineError, ValueError):
    """Response vector has zero variance."""


class DegenerateSample(OSplineError, ValueError):
    """All paired differences are exactly zero."""


# --- numerical failures ------------------------------------------------------

class NotSymmetric(OSplineError, ValueError):
    """Matrix expected to be symmetric is not."""


class NotPositiveDefinite(OSplineError, RuntimeError):
    """Cholesky factorization hit a non-positive pivot."""


class SingularFit(OSplineError, RuntimeError):
    """Penalized normal equations are numerically singular."""


class ConvergenceFailure(OSplineError, RuntimeError):
    """An iterative routine failed to converge within its budget."""


class SelectionFailure(OSplineError, RuntimeError):
    """No valid grid point for smoothing-parameter selection."""


class BracketFailure(OSplineError, RuntimeError):
    """Root bracketing for degrees-of-freedom matching failed."""


class RankMismatch(OSplineError, RuntimeError):
    """Penalty eigen-decomposition produced an unexpected null-space size."""


# --- CLI-level errors --------------------------------------------------------

class InputError(OSplineError, ValueError):
    """Malformed input file (missing cells, non-numeric values)."""


class ConfigError(OSplineError, ValueError):
    """Inconsistent or unknown command-line configuration."""
