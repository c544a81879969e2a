"""Joint estimation of the sampling normalizers from pooled biased samples.

Each biasing function has an unknown normalizing constant: the mean of the
function under the distribution the pool is meant to represent.  Knowing
those constants up to a common scale is enough to reweight the pool so it
mimics an unbiased sample.  The estimates solve a self-consistency system;
in log coordinates u_k = log(rate_k / W_k) the system is the stationarity
condition of a convex potential, which is what the solver minimizes, with
the last coordinate pinned so the trivial common-scale direction is fixed
and W_K = 1 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np
from scipy.special import logsumexp

from .bias_model import DebiasedDistribution, PooledData
from .errors import LogOfZero, NonPositiveW, NotConverged

__all__ = [
    "LogCoordinates",
    "SolverConfig",
    "SolverResult",
    "potential",
    "potential_gradient",
    "potential_hessian",
    "solve",
    "balance_ratios",
    "estimate_normalizers",
    "compute_weights",
    "resample",
]


@dataclass(frozen=True, eq=False)
class LogCoordinates:
    """Solver state u with u_k = log(rate_k / W_k).

    The potential is invariant to adding a constant to all coordinates
    (same degree-0 homogeneity as the normalizers themselves), so the last
    coordinate is pinned at log(rate_K), which is exactly W_K = 1.  All
    entries must be finite.
    """

    u: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        rates = np.asarray(self.rates, dtype=np.float64)
        if u.shape != rates.shape or u.ndim != 1:
            raise ValueError("u and rates must be matching vectors")
        if not np.all(np.isfinite(u)):
            raise ValueError("log coordinates must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_normalizers(cls, W, rates) -> "LogCoordinates":
        W = np.asarray(W, dtype=np.float64)
        _check_W(W)
        return cls(u=np.log(np.asarray(rates) / W), rates=np.asarray(rates))

    def to_normalizers(self) -> np.ndarray:
        return self.rates * np.exp(-self.u)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for solve().

    method is one of "fixed-step-gradient", "quasi-newton", "auto"; auto
    runs the fixed-step gradient first and falls back to the quasi-Newton
    path when it stalls or exhausts its budget.  step_size defaults to
    1 / M^2 where M is the largest biasing-function bound.  seed, when
    given, jitters the starting point; left None the start is the uniform
    normalizer guess W = 1.
    """

    method: str = "auto"
    grad_tol: float = 1e-9
    max_iter: int = 10_000
    step_size: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.method not in ("fixed-step-gradient", "quasi-newton", "auto"):
            raise ValueError("unknown method %r" % (self.method,))
        if not (self.grad_tol > 0):
            raise ValueError("grad_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.step_size is not None and not (self.step_size > 0):
            raise ValueError("step_size must be positive when given")


@dataclass(frozen=True, eq=False)
class SolverResult:
    """Solution of the normalizer system.

    W_hat has its last entry pinned to 1.  weights are the debiasing
    weights of the pooled observations, in pooled order, summing to one.
    gamma_residual is the self-consistency residual vector (zero at an
    exact solution); converged means its max abs entry met grad_tol.
    non_unique flags a solution found on data whose support digraph is not
    strongly connected: the solver still returns a minimizer, but other
    minimizers exist.  hessian_min_eig_at_solution is the smallest
    eigenvalue of the potential curvature restricted to the free
    coordinates (infinite when K = 1, where nothing is free).
    """

    W_hat: np.ndarray
    Omega_hat: np.ndarray
    weights: np.ndarray
    gamma_residual: np.ndarray
    iterations: int
    converged: bool
    hessian_min_eig_at_solution: float
    non_unique: bool

    def to_json(self) -> str:
        payload = {
            "W_hat": self.W_hat.tolist(),
            "Omega_hat": self.Omega_hat.tolist(),
            "weights": self.weights.tolist(),
            "gamma_residual": self.gamma_residual.tolist(),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "non_unique": bool(self.non_unique),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Potential and derivatives
# ---------------------------------------------------------------------------


def _as_u(u, K: int) -> np.ndarray:
    u = np.asarray(getattr(u, "u", u), dtype=np.float64)
    if u.shape != (K,):
        raise ValueError("expected a length-%d coordinate vector" % K)
    return u


def _log_omega(pooled: PooledData) -> np.ndarray:
    """Elementwise log of the bias matrix, -inf where a function is zero.

    Raises LogOfZero when some observation is assigned zero mass by every
    biasing function; the potential is undefined there.
    """
    matrix = pooled.bias_matrix
    if (matrix.max(axis=1) <= 0.0).any():
        raise LogOfZero("an observation has zero value under every biasing function")
    with np.errstate(divide="ignore"):
        return np.log(matrix)


def _softmax_rows(logw: np.ndarray, u: np.ndarray):
    """Per-observation softmax shares over contributing (positive) terms.

    Uses max subtraction inside logsumexp, so only the finite entries shape
    the result; zero biasing values enter with share exactly 0.
    """
    A = logw + u
    lse = logsumexp(A, axis=1)
    R = np.exp(A - lse[:, None])
    return lse, R


def potential(u, pooled: PooledData) -> float:
    """Convex potential whose minimizers solve the normalizer system.

    Value: mean over pooled observations of log sum_k exp(u_k) * omega_k,
    minus the rate-weighted sum of u.  Adding a constant to every
    coordinate leaves it unchanged.
    """
    u = _as_u(u, pooled.K)
    logw = _log_omega(pooled)
    lse, _ = _softmax_rows(logw, u)
    return float(lse.mean() - pooled.rates @ u)


def potential_gradient(u, pooled: PooledData) -> np.ndarray:
    """Gradient of the potential: mean softmax share minus the sample rate,
    coordinate by coordinate.  Components always sum to zero.
    """
    u = _as_u(u, pooled.K)
    logw = _log_omega(pooled)
    _, R = _softmax_rows(logw, u)
    return R.mean(axis=0) - pooled.rates


def potential_hessian(u, pooled: PooledData) -> np.ndarray:
    """Hessian of the potential: the mean per-observation softmax covariance.

    Symmetric positive semidefinite with rows summing to zero; strictly
    positive definite on the pinned subspace exactly when the support
    digraph is strongly connected.
    """
    u = _as_u(u, pooled.K)
    logw = _log_omega(pooled)
    _, R = _softmax_rows(logw, u)
    H = np.diag(R.mean(axis=0)) - (R.T @ R) / pooled.n
    return H


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

_STALL_WINDOW = 20
_STALL_REL_DECREASE = 1e-14
_POLISH_MAX_ITER = 100


def solve(pooled: PooledData, config: SolverConfig | None = None,
          callback=None) -> SolverResult:
    """Estimate the normalizer vector W (last coordinate pinned to 1).

    Minimizes the convex potential in log coordinates over the K - 1 free
    coordinates.  Convergence means the self-consistency residual, the max
    over coordinates of |balance ratio - 1|, is at or below grad_tol.
    callback, when given, is invoked with the full coordinate vector after
    every iterate update.

    On data whose support digraph is not strongly connected the minimizer
    is not unique; the solver returns whichever it found and sets
    non_unique.  Raises NotConverged (carrying the best iterate) when no
    phase reaches the tolerance within its budget.
    """
    cfg = config if config is not None else SolverConfig()
    K = pooled.K
    rates = pooled.rates
    logw = _log_omega(pooled)
    log_rates = np.log(rates)
    pin = log_rates[-1]

    def assemble(ufree):
        return np.concatenate([ufree, [pin]])

    def value_grad(ufree):
        lse, R = _softmax_rows(logw, assemble(ufree))
        grad = R.mean(axis=0) - rates
        val = lse.mean() - rates @ assemble(ufree)
        return val, grad

    def residual_of(grad):
        return float(np.abs(grad / rates).max())

    ufree = log_rates[:-1].copy()
    if cfg.seed is not None:
        ufree = ufree + np.random.default_rng(cfg.seed).normal(0.0, 1.0, K - 1)

    iterations = 0
    if K == 1:
        return _finish(pooled, assemble(ufree), iterations, cfg)

    val, grad = value_grad(ufree)
    best_res, best_u = residual_of(grad), ufree.copy()

    def note_best(res, u):
        nonlocal best_res, best_u
        if res < best_res:
            best_res, best_u = res, u.copy()

    converged = residual_of(grad) <= cfg.grad_tol

    if not converged and cfg.method in ("fixed-step-gradient", "auto"):
        step = cfg.step_size if cfg.step_size is not None \
            else 1.0 / pooled.bias_bound ** 2
        stall = 0
        while iterations < cfg.max_iter:
            ufree = ufree - step * grad[:-1]
            iterations += 1
            newval, grad = value_grad(ufree)
            if callback is not None:
                callback(assemble(ufree))
            res = residual_of(grad)
            note_best(res, ufree)
            if res <= cfg.grad_tol:
                converged = True
                break
            rel = (val - newval) / max(1.0, abs(val))
            stall = stall + 1 if rel < _STALL_REL_DECREASE else 0
            val = newval
            if stall >= _STALL_WINDOW and cfg.method == "auto":
                break
        if not converged and cfg.method == "fixed-step-gradient":
            W_best = rates * np.exp(-assemble(best_u))
            raise NotConverged(
                "fixed-step gradient exhausted %d iterations at residual %.3g"
                % (iterations, best_res),
                W_best=W_best, residual=best_res, iterations=iterations,
            )

    if not converged:
        # quasi-Newton phase, then an exact-curvature polish
        from scipy.optimize import minimize

        def fun(x):
            v, g = value_grad(x)
            return v, g[:-1]

        opt = minimize(
            fun, ufree, jac=True, method="L-BFGS-B",
            options={
                "maxiter": cfg.max_iter,
                "ftol": 1e-16,
                "gtol": cfg.grad_tol * rates.min(),
            },
        )
        ufree = opt.x
        iterations += int(opt.nit)
        if callback is not None:
            callback(assemble(ufree))
        val, grad = value_grad(ufree)
        note_best(residual_of(grad), ufree)

        polish = 0
        while residual_of(grad) > cfg.grad_tol and polish < _POLISH_MAX_ITER:
            H = potential_hessian(assemble(ufree), pooled)[:-1, :-1]
            delta = np.linalg.lstsq(H, grad[:-1], rcond=None)[0]
            t, slope = 1.0, grad[:-1] @ delta
            # slack keeps the decrease test meaningful when the attainable
            # decrease is below float resolution; otherwise the full Newton
            # step gets rejected for rounding up by one ulp and the polish
            # grinds on negligible steps
            slack = 1e-15 * (1.0 + abs(val))
            while t > 1e-12:
                trial = ufree - t * delta
                newval, newgrad = value_grad(trial)
                if newval <= val - 1e-4 * t * slope + slack:
                    break
                t /= 2
            ufree = ufree - t * delta
            val, grad = value_grad(ufree)
            polish += 1
            iterations += 1
            if callback is not None:
                callback(assemble(ufree))
            note_best(residual_of(grad), ufree)
        converged = residual_of(grad) <= cfg.grad_tol

    if not converged:
        W_best = rates * np.exp(-assemble(best_u))
        raise NotConverged(
            "no phase reached grad_tol=%.3g; best residual %.3g after %d iterations"
            % (cfg.grad_tol, best_res, iterations),
            W_best=W_best, residual=best_res, iterations=iterations,
        )

    return _finish(pooled, assemble(ufree), iterations, cfg)


def _finish(pooled: PooledData, u: np.ndarray, iterations: int,
            cfg: SolverConfig) -> SolverResult:
    from .assumptions import support_connectivity

    W = np.exp(np.log(pooled.rates) - u)
    # pinned coordinate: exp of an exact zero, so W[-1] == 1.0 exactly
    gamma = balance_ratios(W, pooled)
    residual = gamma - 1.0
    dist = compute_weights(W, pooled)
    omega = estimate_normalizers(W, pooled)
    if pooled.K > 1:
        H = potential_hessian(u, pooled)[:-1, :-1]
        min_eig = float(np.linalg.eigvalsh(H)[0])
    else:
        min_eig = np.inf
    _, strong = support_connectivity(pooled)
    return SolverResult(
        W_hat=W,
        Omega_hat=omega,
        weights=dist.weights,
        gamma_residual=residual,
        iterations=iterations,
        converged=bool(np.abs(residual).max() <= cfg.grad_tol),
        hessian_min_eig_at_solution=min_eig,
        non_unique=not strong,
    )


# ---------------------------------------------------------------------------
# Downstream estimates at a given W
# ---------------------------------------------------------------------------


def _check_W(W: np.ndarray) -> None:
    if W.ndim != 1:
        raise NonPositiveW("W must be a vector")
    if not np.all(np.isfinite(W)) or W.min() <= 0:
        raise NonPositiveW("W must have strictly positive finite entries")


def _mixture_denominator(W, pooled: PooledData) -> np.ndarray:
    """Per-observation value of sum_k rate_k * omega_k / W_k."""
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (pooled.K,):
        raise NonPositiveW("W must have one entry per sample")
    _check_W(W)
    denom = pooled.bias_matrix @ (pooled.rates / W)
    if denom.min() <= 0.0:
        raise LogOfZero("an observation has zero value under every biasing function")
    return denom


def balance_ratios(W, pooled: PooledData) -> np.ndarray:
    """Self-consistency ratios of a candidate normalizer vector.

    Coordinate k compares the mass that reweighting by W assigns to
    biasing function k against W_k itself; the vector is all ones exactly
    at a solution.  Invariant to rescaling W by a positive constant.
    """
    W = np.asarray(W, dtype=np.float64)
    denom = _mixture_denominator(W, pooled)
    shares = (pooled.bias_matrix / denom[:, None]).mean(axis=0)
    return shares / W


def estimate_normalizers(W, pooled: PooledData) -> np.ndarray:
    """Plug-in estimate of the actual normalizing constants.

    W is only determined up to scale; dividing by the total reweighted
    mass fixes the scale so the estimated distribution integrates to one.
    """
    W = np.asarray(W, dtype=np.float64)
    denom = _mixture_denominator(W, pooled)
    total = (1.0 / denom).mean()
    return W / total


def compute_weights(W, pooled: PooledData) -> DebiasedDistribution:
    """Debiasing weights of the pooled observations under normalizers W.

    Each observation is weighted inversely to its total sampling pressure,
    then normalized to sum to one.  Invariant to rescaling W.
    """
    W = np.asarray(W, dtype=np.float64)
    denom = _mixture_denominator(W, pooled)
    raw = 1.0 / denom
    return DebiasedDistribution(
        observations=pooled.observations, weights=raw / raw.sum()
    )


def resample(dist: DebiasedDistribution, m: int, seed: int) -> list:
    """Draw m observations with replacement, proportionally to the weights.

    Deterministic given the seed.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(dist), size=int(m), replace=True, p=dist.weights)
    return [dist.observations[i] for i in idx]
