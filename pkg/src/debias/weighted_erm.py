"""Risk minimization against a weighted empirical distribution.

Given observations with importance weights (debiasing weights, or uniform
ones for the blind baseline), this module evaluates weighted risks and fits
the two built-in predictors: linear least squares and linear logistic
regression, both with an intercept.  The fitters exist in two forms: array
cores that take (features, responses, weights) and accept any nonnegative
weight vector, and wrappers that consume a DebiasedDistribution.  Fitting
only reweights the loss; minimizers are invariant to rescaling all weights
by a positive constant.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve as linalg_solve
from scipy.special import expit

from .bias_model import DebiasedDistribution, Observation
from .errors import NotConverged, RankDeficient, Separable, TaskMismatch

__all__ = [
    "LossSpec",
    "LinearModel",
    "squared_error",
    "zero_one",
    "logistic_surrogate",
    "weighted_risk",
    "fit_least_squares",
    "fit_weighted_least_squares",
    "fit_logistic",
    "fit_weighted_logistic",
    "max_risk_deviation",
]


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Linear predictor with the intercept stored as the last coefficient.

    For regression, predict returns the fitted value; for classification it
    returns the real-valued score whose sign is the predicted label.
    """

    coefficients: np.ndarray
    task: str = "regression"

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        if coef.ndim != 1 or coef.shape[0] < 1:
            raise ValueError("coefficients must be a nonempty vector")
        if self.task not in ("regression", "binary-classification"):
            raise ValueError("unknown task %r" % (self.task,))
        object.__setattr__(self, "coefficients", coef)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.coefficients.shape[0] - 1:
            raise TaskMismatch(
                "model has %d features, data has %d"
                % (self.coefficients.shape[0] - 1, X.shape[1])
            )
        return X @ self.coefficients[:-1] + self.coefficients[-1]

    def classify(self, X: np.ndarray) -> np.ndarray:
        if self.task != "binary-classification":
            raise TaskMismatch("classify requires a binary-classification model")
        return np.where(self.predict(X) >= 0.0, 1, -1)

    def to_json(self) -> str:
        return json.dumps(
            {"coefficients": self.coefficients.tolist(), "task": self.task},
            sort_keys=True,
        )


@dataclass(frozen=True, eq=False)
class LossSpec:
    """A per-observation loss.

    evaluator maps (Observation, LinearModel) to a nonnegative real.  batch,
    when set, evaluates the model on stacked arrays at once and must agree
    with evaluator pointwise; the built-in factories provide it.
    """

    kind: str
    evaluator: Callable[[Observation, LinearModel], float]
    batch: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("squared-error", "zero-one", "logistic-surrogate"):
            raise ValueError("unknown loss kind %r" % (self.kind,))


def squared_error() -> LossSpec:
    def ev(obs: Observation, model: LinearModel) -> float:
        pred = float(model.predict(obs.features[None, :])[0])
        return (pred - obs.target) ** 2

    def bv(model, X, y, labels):
        r = model.predict(X) - y
        return r * r

    return LossSpec(kind="squared-error", evaluator=ev, batch=bv)


def zero_one() -> LossSpec:
    def ev(obs: Observation, model: LinearModel) -> float:
        score = float(model.predict(obs.features[None, :])[0])
        pred = 1 if score >= 0.0 else -1
        return float(pred != obs.label)

    def bv(model, X, y, labels):
        pred = np.where(model.predict(X) >= 0.0, 1, -1)
        return (pred != labels).astype(float)

    return LossSpec(kind="zero-one", evaluator=ev, batch=bv)


def logistic_surrogate() -> LossSpec:
    def ev(obs: Observation, model: LinearModel) -> float:
        score = float(model.predict(obs.features[None, :])[0])
        return float(np.logaddexp(0.0, -obs.label * score))

    def bv(model, X, y, labels):
        return np.logaddexp(0.0, -labels * model.predict(X))

    return LossSpec(kind="logistic-surrogate", evaluator=ev, batch=bv)


def _check_compat(model: LinearModel, loss: LossSpec, targets, labels) -> None:
    if loss.kind == "squared-error":
        if model.task != "regression":
            raise TaskMismatch("squared-error loss needs a regression model")
        if np.isnan(targets).any():
            raise TaskMismatch("squared-error loss needs a target on every observation")
    else:
        if model.task != "binary-classification":
            raise TaskMismatch("%s loss needs a classification model" % loss.kind)
        if (labels == 0).any():
            raise TaskMismatch("%s loss needs a label on every observation" % loss.kind)


def weighted_risk(model: LinearModel, dist: DebiasedDistribution,
                  loss: LossSpec) -> float:
    """Weighted mean loss of the model over the distribution's support."""
    _check_compat(model, loss, dist.targets, dist.labels)
    if loss.batch is not None:
        losses = np.asarray(
            loss.batch(model, dist.feature_matrix, dist.targets, dist.labels),
            dtype=np.float64,
        )
    else:
        losses = np.array([loss.evaluator(o, model) for o in dist.observations])
    return float(dist.weights @ losses)


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------


def _with_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-d")
    return np.hstack([X, np.ones((X.shape[0], 1))])


def fit_least_squares(X, y, weights, on_rank_deficient: str = "lstsq") -> np.ndarray:
    """Exact minimizer of the weighted squared error, intercept included.

    Solves the normal equations with a symmetric positive-definite solve.
    When the weighted Gram matrix is singular beyond tolerance the behavior
    follows on_rank_deficient: "lstsq" (default) returns the minimum-norm
    minimizer, "raise" raises RankDeficient.  Weights only need to be
    nonnegative; rescaling them all leaves the minimizer unchanged.
    """
    if on_rank_deficient not in ("lstsq", "raise"):
        raise ValueError("on_rank_deficient must be 'lstsq' or 'raise'")
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.min() < 0:
        raise ValueError("weights must be nonnegative")
    X1 = _with_intercept(X)
    if X1.shape[0] != y.shape[0] or y.shape[0] != w.shape[0]:
        raise ValueError("X, y, and weights must agree in length")

    G = X1.T @ (X1 * w[:, None])
    eig = np.linalg.eigvalsh(G)
    tol = G.shape[0] * np.finfo(np.float64).eps * max(eig[-1], 0.0)
    if eig[0] <= tol:
        if on_rank_deficient == "raise":
            raise RankDeficient(
                "weighted Gram matrix is singular (min eig %.3g, max %.3g)"
                % (eig[0], eig[-1])
            )
        s = np.sqrt(w)
        return np.linalg.lstsq(X1 * s[:, None], y * s, rcond=None)[0]
    return linalg_solve(G, X1.T @ (w * y), assume_a="pos")


def fit_weighted_least_squares(dist: DebiasedDistribution,
                               on_rank_deficient: str = "lstsq") -> LinearModel:
    """Weighted least squares on a distribution's observations and targets."""
    y = dist.targets
    if np.isnan(y).any():
        raise TaskMismatch("least squares needs a target on every observation")
    coef = fit_least_squares(dist.feature_matrix, y, dist.weights,
                             on_rank_deficient=on_rank_deficient)
    return LinearModel(coefficients=coef, task="regression")


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


def fit_logistic(X, labels, weights, max_iter: int = 100, tol: float = 1e-8,
                 norm_cap: float = 1e6) -> np.ndarray:
    """Weighted logistic regression by damped Newton, labels in {-1, +1}.

    Deterministic: no randomness anywhere.  Raises Separable when the data
    admits no finite minimizer, detected exactly: any iterate that gives
    every positively-weighted observation a strictly positive margin
    certifies a separating hyperplane.  A norm cap (default 1e6) guards the
    near-separable creep regime.  Exhausting the iteration budget at an
    interior optimum raises NotConverged with the best iterate instead.
    """
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TaskMismatch("labels must be -1 or +1")
    if w.min() < 0:
        raise ValueError("weights must be nonnegative")
    X1 = _with_intercept(X)
    if not (X1.shape[0] == y.shape[0] == w.shape[0]):
        raise ValueError("X, labels, and weights must agree in length")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    active = w > 0

    beta = np.zeros(X1.shape[1])
    eta = X1 @ beta
    for _ in range(max_iter):
        m = y * eta
        p = expit(-m)                       # sigma(-margin), stable both tails
        if np.all(m[active] > 0.0):
            raise Separable(
                "current iterate separates the weighted data "
                "(min margin %.3g, ||beta|| %.3g, cap %g): the weighted "
                "logistic loss has no finite minimizer"
                % (m[active].min(), np.linalg.norm(beta), norm_cap)
            )
        grad = -X1.T @ (w * y * p)
        if np.abs(grad).max() <= tol:
            return beta
        bnorm = np.linalg.norm(beta)
        if bnorm > norm_cap:
            raise Separable(
                "coefficient norm %.3g exceeded the cap %g with gradient %.3g: "
                "data is separable or numerically indistinguishable from it"
                % (bnorm, norm_cap, np.abs(grad).max())
            )
        s = w * expit(m) * p
        H = X1.T @ (X1 * s[:, None])
        H[np.diag_indices_from(H)] += 1e-12 * max(1.0, np.trace(H))
        try:
            delta = linalg_solve(H, grad, assume_a="pos")
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(H, grad, rcond=None)[0]
        loss = w @ np.logaddexp(0.0, -m)
        slope = grad @ delta
        # the slack keeps the sufficient-decrease test meaningful once the
        # attainable decrease drops below float resolution; without it the
        # search grinds on fractional steps instead of taking Newton's full
        # endgame step
        slack = 1e-15 * (1.0 + abs(loss))
        t = 1.0
        while t > 1e-12:
            trial = beta - t * delta
            trial_eta = X1 @ trial
            if w @ np.logaddexp(0.0, -y * trial_eta) <= loss - 1e-4 * t * slope + slack:
                break
            t /= 2
        beta = beta - t * delta
        eta = X1 @ beta
    # budget ran out away from any separability certificate: the optimum is
    # interior but the tolerance was not reached (usually tol is tighter
    # than the damping allows)
    raise NotConverged(
        "logistic fit did not reach gradient tolerance %.3g in %d iterations "
        "(gradient %.3g, ||beta|| %.3g)"
        % (tol, max_iter, np.abs(grad).max(), np.linalg.norm(beta)),
        W_best=beta, residual=float(np.abs(grad).max()), iterations=max_iter,
    )


def fit_weighted_logistic(dist: DebiasedDistribution, max_iter: int = 100,
                          tol: float = 1e-8, norm_cap: float = 1e6) -> LinearModel:
    """Weighted logistic regression on a distribution's observations."""
    labels = dist.labels
    if (labels == 0).any():
        raise TaskMismatch("logistic regression needs a label on every observation")
    coef = fit_logistic(dist.feature_matrix, labels, dist.weights,
                        max_iter=max_iter, tol=tol, norm_cap=norm_cap)
    return LinearModel(coefficients=coef, task="binary-classification")


# ---------------------------------------------------------------------------
# Uniform deviation over a model grid
# ---------------------------------------------------------------------------


def max_risk_deviation(dist: DebiasedDistribution,
                       reference_risk: Callable[[LinearModel], float],
                       models: Sequence[LinearModel],
                       loss: LossSpec) -> float:
    """Largest gap between weighted empirical risk and a reference risk
    over a fixed grid of models.

    reference_risk supplies the comparison value (typically the population
    risk when it is known in closed form).
    """
    models = list(models)
    if not models:
        raise ValueError("need at least one model in the grid")
    gaps = [
        abs(weighted_risk(m, dist, loss) - float(reference_risk(m)))
        for m in models
    ]
    return float(max(gaps))
