"""Observations, biasing functions, and the pooled-sample container.

A study pools K samples.  Sample k was collected under a known biasing
function: a nonnegative, bounded function of the observation that tilts
the base distribution.  This module evaluates every biasing function on
every pooled observation and packages the result for the solver, and it
defines the weighted-observation container that downstream estimation
consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EvaluatorOutOfRange,
    OwnWeightZero,
)

__all__ = [
    "Observation",
    "BiasingFunction",
    "PooledData",
    "DebiasedDistribution",
    "evaluate_bias_matrix",
    "bias_values",
    "pooled_empirical_measure",
    "biasing_from_config",
    "whole_space",
    "norm_ball",
    "norm_shell",
    "component_band",
    "component_above",
    "component_below",
    "censor_threshold",
    "custom_bias",
]


@dataclass(frozen=True, eq=False)
class Observation:
    """One data point: a feature vector plus an optional regression target
    or an optional binary label in {-1, +1}.  At most one of the two may be
    present.
    """

    features: np.ndarray
    target: Optional[float] = None
    label: Optional[int] = None

    def __post_init__(self):
        feats = np.atleast_1d(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 1:
            raise DimensionMismatch("features must be a 1-d vector")
        if not np.isfinite(feats).all():
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", feats)
        if self.target is not None and self.label is not None:
            raise ValueError("an observation may carry a target or a label, not both")
        if self.target is not None:
            target = float(self.target)
            if not np.isfinite(target):
                raise ValueError("target must be finite")
            object.__setattr__(self, "target", target)
        if self.label is not None:
            if self.label not in (-1, 1):
                raise ValueError("labels must be -1 or +1, got %r" % (self.label,))
            object.__setattr__(self, "label", int(self.label))

    @property
    def dim(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True, eq=False)
class BiasingFunction:
    """Known sampling tilt for one sample.

    evaluator maps an Observation to a value in [0, upper_bound];
    declared_lower is a caller-supplied lower bound used only for
    documentation and diagnostics.  kind is "indicator", "censor", or
    "custom".  Indicator kinds must return exactly 0.0 or 1.0.

    batch, when present, evaluates a whole feature matrix at once
    (features of shape (m, d), targets of shape (m,) with NaN marking
    absent targets) and must agree with evaluator pointwise.  config
    records the declarative description the function was built from,
    None for hand-written evaluators.
    """

    kind: str
    evaluator: Callable[[Observation], float]
    upper_bound: float = 1.0
    declared_lower: float = 0.0
    batch: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    config: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in ("indicator", "censor", "custom"):
            raise ValueError("unknown biasing-function kind %r" % (self.kind,))
        if not (np.isfinite(self.upper_bound) and self.upper_bound > 0):
            raise ValueError("upper_bound must be a positive finite real")
        if self.declared_lower < 0:
            raise ValueError("declared_lower must be nonnegative")

    def __call__(self, obs: Observation) -> float:
        return float(self.evaluator(obs))


# ---------------------------------------------------------------------------
# Declarative biasing-function catalog.  These are the forms the config
# grammar and the scenario presets understand; anything else goes through
# custom_bias.
# ---------------------------------------------------------------------------


def whole_space() -> BiasingFunction:
    """No tilt at all: the sample is unbiased."""
    return BiasingFunction(
        kind="indicator",
        evaluator=lambda obs: 1.0,
        batch=lambda X, y: np.ones(X.shape[0]),
        config={"kind": "whole_space"},
    )


def norm_ball(r: float) -> BiasingFunction:
    """Keep points with Euclidean feature norm at most r."""
    r = float(r)
    if not (np.isfinite(r) and r > 0):
        raise ValueError("norm_ball radius must be positive")
    return BiasingFunction(
        kind="indicator",
        evaluator=lambda obs: float(np.sqrt(obs.features @ obs.features) <= r),
        batch=lambda X, y: (np.sqrt(np.einsum("ij,ij->i", X, X)) <= r).astype(float),
        config={"kind": "norm_ball", "r": r},
    )


def norm_shell(r: float) -> BiasingFunction:
    """Keep points with Euclidean feature norm at least r."""
    r = float(r)
    if not (np.isfinite(r) and r >= 0):
        raise ValueError("norm_shell radius must be nonnegative")
    return BiasingFunction(
        kind="indicator",
        evaluator=lambda obs: float(np.sqrt(obs.features @ obs.features) >= r),
        batch=lambda X, y: (np.sqrt(np.einsum("ij,ij->i", X, X)) >= r).astype(float),
        config={"kind": "norm_shell", "r": r},
    )


def component_band(j: int, c: float) -> BiasingFunction:
    """Keep points whose j-th feature lies strictly inside (-c, c)."""
    j, c = int(j), float(c)
    if j < 0:
        raise ValueError("component index must be nonnegative")
    if not (np.isfinite(c) and c > 0):
        raise ValueError("band half-width must be positive")

    def ev(obs: Observation) -> float:
        _check_component(obs.dim, j)
        return float(abs(obs.features[j]) < c)

    def bv(X: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_component(X.shape[1], j)
        return (np.abs(X[:, j]) < c).astype(float)

    return BiasingFunction(
        kind="indicator", evaluator=ev, batch=bv,
        config={"kind": "component_band", "j": j, "c": c},
    )


def component_above(j: int, c: float) -> BiasingFunction:
    """Keep points whose j-th feature exceeds c."""
    j, c = int(j), float(c)
    if j < 0:
        raise ValueError("component index must be nonnegative")

    def ev(obs: Observation) -> float:
        _check_component(obs.dim, j)
        return float(obs.features[j] > c)

    def bv(X: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_component(X.shape[1], j)
        return (X[:, j] > c).astype(float)

    return BiasingFunction(
        kind="indicator", evaluator=ev, batch=bv,
        config={"kind": "component_above", "j": j, "c": c},
    )


def component_below(j: int, c: float) -> BiasingFunction:
    """Keep points whose j-th feature is below c."""
    j, c = int(j), float(c)
    if j < 0:
        raise ValueError("component index must be nonnegative")

    def ev(obs: Observation) -> float:
        _check_component(obs.dim, j)
        return float(obs.features[j] < c)

    def bv(X: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_component(X.shape[1], j)
        return (X[:, j] < c).astype(float)

    return BiasingFunction(
        kind="indicator", evaluator=ev, batch=bv,
        config={"kind": "component_below", "j": j, "c": c},
    )


def censor_threshold(tau: float) -> BiasingFunction:
    """Keep observations whose target does not exceed tau.

    Reads the target, so every observation it is evaluated on must carry one.
    """
    tau = float(tau)

    def ev(obs: Observation) -> float:
        if obs.target is None:
            raise ValueError("censor biasing needs a target on every observation")
        return float(obs.target <= tau)

    def bv(X: np.ndarray, y: np.ndarray) -> np.ndarray:
        if np.isnan(y).any():
            raise ValueError("censor biasing needs a target on every observation")
        return (y <= tau).astype(float)

    return BiasingFunction(
        kind="censor", evaluator=ev, batch=bv,
        config={"kind": "censor", "tau": tau},
    )


def custom_bias(evaluator, upper_bound, declared_lower=0.0, batch=None) -> BiasingFunction:
    """Wrap a hand-written evaluator.  The caller owns the bound."""
    return BiasingFunction(
        kind="custom", evaluator=evaluator, upper_bound=float(upper_bound),
        declared_lower=float(declared_lower), batch=batch, config=None,
    )


def _check_component(dim: int, j: int) -> None:
    if j >= dim:
        raise DimensionMismatch(
            "component index %d out of range for %d features" % (j, dim)
        )


_CONFIG_BUILDERS = {
    "whole_space": (whole_space, ()),
    "norm_ball": (norm_ball, ("r",)),
    "norm_shell": (norm_shell, ("r",)),
    "component_band": (component_band, ("j", "c")),
    "component_above": (component_above, ("j", "c")),
    "component_below": (component_below, ("j", "c")),
    "censor": (censor_threshold, ("tau",)),
}


def biasing_from_config(cfg: Mapping) -> BiasingFunction:
    """Build a biasing function from a declarative config mapping.

    Expected shapes: {"kind": "norm_ball", "r": 0.8}, {"kind": "whole_space"},
    {"kind": "component_band", "j": 0, "c": 0.1}, {"kind": "censor", "tau": 1.0},
    and the norm_shell / component_above / component_below analogues.
    """
    from .errors import SchemaError

    if not isinstance(cfg, Mapping) or "kind" not in cfg:
        raise SchemaError("biasing config must be a mapping with a 'kind' key")
    kind = cfg["kind"]
    if kind not in _CONFIG_BUILDERS:
        raise SchemaError("unknown biasing kind %r" % (kind,))
    builder, params = _CONFIG_BUILDERS[kind]
    missing = [p for p in params if p not in cfg]
    if missing:
        raise SchemaError("biasing kind %r missing params %s" % (kind, missing))
    extra = set(cfg) - {"kind", *params}
    if extra:
        raise SchemaError("biasing kind %r got unknown params %s" % (kind, sorted(extra)))
    try:
        return builder(*(cfg[p] for p in params))
    except (TypeError, ValueError) as exc:
        raise SchemaError("bad parameters for biasing kind %r: %s" % (kind, exc)) from exc


# ---------------------------------------------------------------------------
# Pooled container
# ---------------------------------------------------------------------------


def _stack(observations: Sequence[Observation]):
    X = np.stack([o.features for o in observations])
    y = np.array([np.nan if o.target is None else o.target for o in observations])
    lab = np.array([0 if o.label is None else o.label for o in observations])
    return X, y, lab


def _evaluate_column(fn: BiasingFunction, observations, X, y) -> np.ndarray:
    if fn.batch is not None:
        col = np.asarray(fn.batch(X, y), dtype=np.float64)
        if col.shape != (X.shape[0],):
            raise DimensionMismatch("batch evaluator returned wrong shape")
        return col
    return np.array([fn(o) for o in observations], dtype=np.float64)


def _validate_column(col: np.ndarray, fn: BiasingFunction, l: int) -> None:
    if not np.all(np.isfinite(col)):
        raise EvaluatorOutOfRange("biasing function %d returned a non-finite value" % l)
    if col.min() < 0.0 or col.max() > fn.upper_bound:
        raise EvaluatorOutOfRange(
            "biasing function %d left [0, %g]" % (l, fn.upper_bound)
        )
    if fn.kind in ("indicator", "censor"):
        bad = ~((col == 0.0) | (col == 1.0))
        if bad.any():
            raise EvaluatorOutOfRange(
                "indicator biasing function %d returned values other than 0 and 1" % l
            )


@dataclass(frozen=True, eq=False)
class PooledData:
    """All K samples pooled in sample-major order, with every biasing
    function evaluated on every observation.

    Rows of bias_matrix follow the pooled order: sample 0's observations
    in their original order, then sample 1's, and so on.  rates holds the
    empirical sample shares n_k / n, renormalized so they sum to one.
    """

    samples: tuple
    functions: tuple
    sizes: np.ndarray
    n: int
    rates: np.ndarray
    bias_matrix: np.ndarray

    @property
    def K(self) -> int:
        return len(self.functions)

    @property
    def dim(self) -> int:
        return self.samples[0][0].dim

    @property
    def bias_bound(self) -> float:
        """Largest declared upper bound across the K biasing functions."""
        return max(fn.upper_bound for fn in self.functions)

    @cached_property
    def observations(self) -> tuple:
        """All observations in pooled (sample-major) order."""
        return tuple(o for sample in self.samples for o in sample)

    @cached_property
    def _arrays(self):
        return _stack(self.observations)

    @property
    def feature_matrix(self) -> np.ndarray:
        return self._arrays[0]

    @property
    def targets(self) -> np.ndarray:
        """Targets in pooled order, NaN where absent."""
        return self._arrays[1]

    @property
    def labels(self) -> np.ndarray:
        """Labels in pooled order, 0 where absent."""
        return self._arrays[2]

    @cached_property
    def sample_ids(self) -> np.ndarray:
        """Index of the originating sample for each pooled row."""
        return np.repeat(np.arange(self.K), self.sizes)


def evaluate_bias_matrix(samples, functions) -> PooledData:
    """Pool the samples and evaluate every biasing function on every point.

    samples is a length-K sequence of observation sequences, functions the
    matching biasing functions.  Raises DimensionMismatch when the two
    disagree in length, a sample is empty, or feature dimensions differ;
    EvaluatorOutOfRange when a function leaves its declared range; and
    OwnWeightZero when some observation is invisible to its own sample's
    biasing function (such a point could never have been sampled).
    """
    functions = tuple(functions)
    samples = tuple(tuple(s) for s in samples)
    K = len(functions)
    if K < 1:
        raise DimensionMismatch("need at least one sample")
    if len(samples) != K:
        raise DimensionMismatch(
            "%d samples but %d biasing functions" % (len(samples), K)
        )
    for k, s in enumerate(samples):
        if len(s) == 0:
            raise DimensionMismatch("sample %d is empty" % k)
    dims = {o.dim for s in samples for o in s}
    if len(dims) != 1:
        raise DimensionMismatch("feature dimensions differ across observations: %s"
                                % sorted(dims))

    observations = [o for s in samples for o in s]
    X, y, _ = _stack(observations)
    n = len(observations)
    sizes = np.array([len(s) for s in samples], dtype=np.int64)

    matrix = np.empty((n, K), dtype=np.float64)
    for l, fn in enumerate(functions):
        col = _evaluate_column(fn, observations, X, y)
        _validate_column(col, fn, l)
        matrix[:, l] = col

    offset = 0
    for k, size in enumerate(sizes):
        own = matrix[offset:offset + size, k]
        zero = np.flatnonzero(own <= 0.0)
        if zero.size:
            raise OwnWeightZero(
                "observation %d of sample %d has zero weight under its own "
                "biasing function" % (zero[0], k)
            )
        offset += size

    rates = sizes / n
    rates = rates / rates.sum()  # renormalization guard, at most 1 ulp

    return PooledData(
        samples=samples,
        functions=functions,
        sizes=sizes,
        n=n,
        rates=rates,
        bias_matrix=matrix,
    )


def bias_values(observations: Sequence[Observation], functions) -> np.ndarray:
    """Evaluate biasing functions on observations that belong to no sample,
    e.g. a held-out test set.  Range-checked like evaluate_bias_matrix but
    without the own-weight requirement.
    """
    functions = tuple(functions)
    observations = list(observations)
    if not observations:
        return np.empty((0, len(functions)))
    dims = {o.dim for o in observations}
    if len(dims) != 1:
        raise DimensionMismatch("feature dimensions differ across observations")
    X, y, _ = _stack(observations)
    matrix = np.empty((len(observations), len(functions)), dtype=np.float64)
    for l, fn in enumerate(functions):
        col = _evaluate_column(fn, observations, X, y)
        _validate_column(col, fn, l)
        matrix[:, l] = col
    return matrix


# ---------------------------------------------------------------------------
# Weighted observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DebiasedDistribution:
    """Observations paired with nonnegative weights that sum to one.

    This is the estimated test distribution: expectations against it are
    weighted sums, and resampling draws observations proportionally to
    their weights.
    """

    observations: tuple
    weights: np.ndarray

    def __post_init__(self):
        obs = tuple(self.observations)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(obs) != w.shape[0]:
            raise ValueError("weights must be a vector matching the observations")
        if w.min() < 0:
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one (got %.17g)" % w.sum())
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.observations)

    def expectation(self, fn: Callable[[Observation], float]) -> float:
        """Weighted mean of fn over the support."""
        vals = np.array([fn(o) for o in self.observations], dtype=np.float64)
        return float(self.weights @ vals)

    @cached_property
    def _arrays(self):
        return _stack(self.observations)

    @property
    def feature_matrix(self) -> np.ndarray:
        return self._arrays[0]

    @property
    def targets(self) -> np.ndarray:
        return self._arrays[1]

    @property
    def labels(self) -> np.ndarray:
        return self._arrays[2]


def pooled_empirical_measure(pooled: PooledData) -> DebiasedDistribution:
    """Uniform 1/n weights over the pooled observations.

    This is the blind concatenation baseline: what you get by ignoring the
    sampling bias altogether.
    """
    w = np.full(pooled.n, 1.0 / pooled.n)
    return DebiasedDistribution(observations=pooled.observations, weights=w)
