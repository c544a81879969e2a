"""Exception types shared across the package.

Every error raised on purpose derives from DebiasError so callers can
catch the package's failures with a single except clause.
"""


class DebiasError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DebiasError):
    """Sample list and biasing-function list disagree, or feature dims differ."""


class EvaluatorOutOfRange(DebiasError):
    """A biasing function returned a value outside [0, upper_bound]."""


class OwnWeightZero(DebiasError):
    """An observation has zero value under its own sample's biasing function."""


class BadKappa(DebiasError):
    """Overlap threshold kappa is not a positive real."""


class LogOfZero(DebiasError):
    """A pooled observation is assigned zero mass by every biasing function."""


class NonPositiveW(DebiasError):
    """Normalizer vector contains a zero or negative entry."""


class NotConverged(DebiasError):
    """Solver exhausted its iteration budget without meeting the tolerance.

    Carries the best iterate seen so the caller can inspect or resume.
    """

    def __init__(self, message, W_best=None, residual=None, iterations=0):
        super().__init__(message)
        self.W_best = W_best
        self.residual = residual
        self.iterations = iterations


class TaskMismatch(DebiasError):
    """Loss, model task, and available targets/labels are inconsistent."""


class RankDeficient(DebiasError):
    """Weighted Gram matrix is singular beyond tolerance."""


class Separable(DebiasError):
    """Weighted logistic loss has no finite minimizer on the given data."""


class RejectionStall(DebiasError):
    """Rejection sampler acceptance rate collapsed; region has too little mass."""


class UnknownPreset(DebiasError):
    """Requested scenario preset name is not in the catalog."""


class ParseError(DebiasError):
    """A data or config file could not be parsed; message cites the location."""


class SchemaError(DebiasError):
    """A parsed file has the wrong shape: missing columns, bad ids, bad kinds."""
