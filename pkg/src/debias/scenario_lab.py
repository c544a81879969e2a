"""Synthetic scenarios: biased-sample generation, experiments, rate checks.

The built-in presets draw from a 3-d standard Gaussian and regress the
Euclidean norm of the features on the features plus an intercept.  Each
preset pools strata drawn by rejection under indicator biasing functions;
an experiment compares training on the blind pool (standard), on the
debiased weights, and, when an unbiased stratum exists, on that stratum
alone.  The rate check measures how fast the estimated normalizers and
the weighted empirical risks approach their population values as the
pool grows.

Preset sizes marked "interpretive" below are choices this package makes
where only qualitative descriptions exist; they are documented here and
in the catalog next to each preset.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2, norm as normal_dist

from . import vardi_solver
from .bias_model import (
    DebiasedDistribution,
    Observation,
    biasing_from_config,
    evaluate_bias_matrix,
    pooled_empirical_measure,
)
from .errors import (
    LogOfZero,
    NotConverged,
    RankDeficient,
    RejectionStall,
    Separable,
    UnknownPreset,
)
from .weighted_erm import (
    LinearModel,
    fit_weighted_least_squares,
    fit_weighted_logistic,
    max_risk_deviation,
    squared_error,
)

__all__ = [
    "ScenarioSpec",
    "ExperimentReport",
    "RateCheckResult",
    "preset",
    "preset_names",
    "generate_scenario",
    "run_experiment",
    "rate_check",
    "true_normalizers",
    "true_normalizers_mc",
    "gaussian_norm_risk",
    "model_grid",
]

GAUSSIAN3D = "standard-gaussian-3d"
CUSTOM_CSV = "custom-csv"

_TREATMENTS = ("standard", "debiased", "unbiased_only")
_LEARNERS = ("LR", "LogReg")


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to draw one replicate of a scenario.

    biasing_defs are declarative configs (see biasing_from_config); the
    whole_space kind is also what marks a stratum as unbiased for the
    unbiased-only training arm.  target picks the response: "norm" is the
    Euclidean feature norm, "component" is feature target_component, and
    "supplied" keeps whatever the custom CSV provides.
    """

    name: str
    biasing_defs: tuple
    sample_sizes: tuple
    test_size: int = 300
    base_distribution: str = GAUSSIAN3D
    target: str = "norm"
    target_component: int = 0
    n_runs: int = 100
    seed: int = 0
    csv_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "biasing_defs",
                           tuple(dict(d) for d in self.biasing_defs))
        object.__setattr__(self, "sample_sizes",
                           tuple(int(s) for s in self.sample_sizes))
        if len(self.biasing_defs) != len(self.sample_sizes):
            raise ValueError("one sample size per biasing definition")
        if len(self.biasing_defs) < 1:
            raise ValueError("need at least one stratum")
        if any(s < 1 for s in self.sample_sizes):
            raise ValueError("sample sizes must be positive")
        if self.test_size < 1:
            raise ValueError("test_size must be positive")
        if self.base_distribution not in (GAUSSIAN3D, CUSTOM_CSV):
            raise ValueError("unknown base distribution %r" % (self.base_distribution,))
        if self.target not in ("norm", "component", "supplied"):
            raise ValueError("unknown target %r" % (self.target,))
        if self.base_distribution == CUSTOM_CSV and self.csv_path is None:
            raise ValueError("custom-csv scenarios need csv_path")
        if self.n_runs < 1:
            raise ValueError("n_runs must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def K(self) -> int:
        return len(self.biasing_defs)

    @property
    def n_train(self) -> int:
        return sum(self.sample_sizes)

    def functions(self) -> tuple:
        return tuple(biasing_from_config(d) for d in self.biasing_defs)

    def unbiased_strata(self) -> tuple:
        return tuple(k for k, d in enumerate(self.biasing_defs)
                     if d.get("kind") == "whole_space")


# ---------------------------------------------------------------------------
# Preset catalog.
#
# All presets pool 1000 training points, test on 300 unbiased points, and
# regress the feature norm.  Where the qualitative description fixes the
# functions but not the split, the chosen split is marked interpretive.
# ---------------------------------------------------------------------------

def _spec(name, defs, sizes):
    return ScenarioSpec(name=name, biasing_defs=tuple(defs), sample_sizes=tuple(sizes))


_PRESETS = {
    # two overlapping norm strata of equal size splitting the space
    "a": _spec("a", [{"kind": "norm_ball", "r": 1.6},
                     {"kind": "norm_shell", "r": 1.4}], [500, 500]),
    # heavy small-norm bias: 900 points inside radius 0.8 (about 11% of the
    # mass), 100 unbiased
    "b": _spec("b", [{"kind": "norm_ball", "r": 0.8},
                     {"kind": "whole_space"}], [900, 100]),
    # same bias, balanced 50/50 split
    "c": _spec("c", [{"kind": "norm_ball", "r": 0.8},
                     {"kind": "whole_space"}], [500, 500]),
    # the unbiased stratum replaced by a large-norm stratum, same split as c
    "d": _spec("d", [{"kind": "norm_ball", "r": 0.8},
                     {"kind": "norm_shell", "r": 0.5}], [500, 500]),
    # same functions as d with few small-norm points (interpretive split):
    # the pool is close to unbiased, so debiasing has little left to fix
    "e": _spec("e", [{"kind": "norm_ball", "r": 0.8},
                     {"kind": "norm_shell", "r": 0.5}], [100, 900]),
    # three strata: dominant small-norm bias plus large-norm and unbiased
    # top-ups (interpretive split)
    "f": _spec("f", [{"kind": "norm_ball", "r": 0.8},
                     {"kind": "norm_shell", "r": 0.5},
                     {"kind": "whole_space"}], [500, 250, 250]),
    # component analogue of b: first coordinate squeezed into (-0.1, 0.1)
    "g": _spec("g", [{"kind": "component_band", "j": 0, "c": 0.1},
                     {"kind": "whole_space"}], [900, 100]),
    # component analogue of c
    "h": _spec("h", [{"kind": "component_band", "j": 0, "c": 0.1},
                     {"kind": "whole_space"}], [500, 500]),
    # bias toward large first coordinate, balanced against unbiased
    # (interpretive split)
    "i": _spec("i", [{"kind": "component_above", "j": 0, "c": 1.5},
                     {"kind": "whole_space"}], [500, 500]),
    # three overlapping component strata with sizes near their true masses,
    # so the blind pool is nearly unbiased (interpretive split)
    "j": _spec("j", [{"kind": "component_below", "j": 0, "c": 0.1},
                     {"kind": "component_band", "j": 0, "c": 0.1},
                     {"kind": "component_above", "j": 0, "c": -0.1}],
               [460, 80, 460]),
    # same strata as j with the middle band heavily oversampled
    # (interpretive split)
    "k": _spec("k", [{"kind": "component_below", "j": 0, "c": 0.1},
                     {"kind": "component_band", "j": 0, "c": 0.1},
                     {"kind": "component_above", "j": 0, "c": -0.1}],
               [250, 500, 250]),
    # four strata: band, both tails, and an unbiased top-up
    # (interpretive split)
    "l": _spec("l", [{"kind": "component_band", "j": 0, "c": 0.1},
                     {"kind": "component_above", "j": 0, "c": 1.5},
                     {"kind": "component_below", "j": 0, "c": -1.5},
                     {"kind": "whole_space"}], [400, 150, 150, 300]),
}


def preset_names() -> tuple:
    return tuple(sorted(_PRESETS))


def preset(name: str) -> ScenarioSpec:
    """Look up a preset scenario by its catalog letter."""
    try:
        return _PRESETS[name]
    except KeyError:
        raise UnknownPreset(
            "unknown preset %r; available: %s" % (name, ", ".join(preset_names()))
        ) from None


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

_STALL_PROPOSALS = 200_000
_STALL_RATE = 1e-4


def _gaussian_batch(rng, m: int, spec: ScenarioSpec):
    X = rng.standard_normal((m, 3))
    if spec.target == "norm":
        y = np.sqrt(np.einsum("ij,ij->i", X, X))
    else:  # component
        y = X[:, spec.target_component]
    return X, y


def _bias_column(fn, X, y):
    if fn.batch is not None:
        return np.asarray(fn.batch(X, y), dtype=np.float64)
    obs = [Observation(features=x, target=t) for x, t in zip(X, y)]
    return np.array([fn(o) for o in obs], dtype=np.float64)


def _rejection_gaussian(rng, fn, count: int, spec: ScenarioSpec) -> list:
    """Draw `count` points from the Gaussian base conditioned by fn,
    by proposal and thinning with acceptance probability fn / bound."""
    out = []
    proposals = 0
    accepted = 0
    while len(out) < count:
        remaining = count - len(out)
        if accepted > 0:
            rate = accepted / proposals
            chunk = max(1024, int(1.5 * remaining / rate))
        else:
            chunk = max(1024, 4 * remaining)
        X, y = _gaussian_batch(rng, chunk, spec)
        vals = _bias_column(fn, X, y)
        u = rng.uniform(size=chunk)
        keep = np.flatnonzero(u * fn.upper_bound < vals)[:remaining]
        proposals += chunk
        accepted += keep.size
        for i in keep:
            out.append(Observation(features=X[i], target=float(y[i])))
        if proposals >= _STALL_PROPOSALS and accepted / proposals < _STALL_RATE:
            raise RejectionStall(
                "acceptance rate %.2g after %d proposals; the biased region "
                "carries too little mass" % (accepted / proposals, proposals)
            )
    return out


def _load_rows(path: str) -> list:
    from .cli_io import read_plain_dataset
    return read_plain_dataset(path)


def _generate_csv(spec: ScenarioSpec, rng, functions):
    rows = _load_rows(spec.csv_path)
    if spec.test_size + spec.n_train > len(rows):
        raise RejectionStall(
            "dataset has %d rows, scenario needs at least %d"
            % (len(rows), spec.test_size + spec.n_train)
        )
    order = rng.permutation(len(rows))
    test = [rows[i] for i in order[:spec.test_size]]
    pool = [rows[i] for i in order[spec.test_size:]]

    samples = []
    cursor = 0
    for fn, count in zip(functions, spec.sample_sizes):
        sample = []
        while len(sample) < count:
            if cursor >= len(pool):
                raise RejectionStall(
                    "dataset exhausted while drawing %d points for a stratum"
                    % count
                )
            obs = pool[cursor]
            cursor += 1
            val = fn(obs)
            if rng.uniform() * fn.upper_bound < val:
                sample.append(obs)
        samples.append(sample)
    return samples, test


def generate_scenario(spec: ScenarioSpec, run_index: int):
    """Draw one replicate: K biased training strata plus an unbiased test set.

    The random stream is derived from (spec.seed, run_index), so replicates
    are independent and any one of them can be regenerated on its own.
    Returns (PooledData, list of test Observations).
    """
    if run_index < 0:
        raise ValueError("run_index must be nonnegative")
    rng = np.random.default_rng([spec.seed, run_index])
    functions = spec.functions()

    if spec.base_distribution == GAUSSIAN3D:
        samples = [
            _rejection_gaussian(rng, fn, count, spec)
            for fn, count in zip(functions, spec.sample_sizes)
        ]
        X, y = _gaussian_batch(rng, spec.test_size, spec)
        test = [Observation(features=x, target=float(t)) for x, t in zip(X, y)]
    else:
        samples, test = _generate_csv(spec, rng, functions)

    pooled = evaluate_bias_matrix(samples, functions)
    return pooled, test


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """Per-run metrics of every (learner, treatment) cell plus failures.

    values maps (learner, treatment) to the metric of each successful run,
    aligned with run_indices.  LR cells hold test mean squared error against
    the true target; LogReg cells hold test accuracy in [0, 1].
    """

    scenario: str
    learners: tuple
    treatments: tuple
    n_runs: int
    run_indices: tuple
    values: dict
    failures: tuple = field(default_factory=tuple)

    def metric_name(self, learner: str) -> str:
        return "accuracy" if learner == "LogReg" else "mse"

    def mean(self, learner: str, treatment: str) -> float:
        v = self.values[(learner, treatment)]
        return float(np.mean(v)) if len(v) else float("nan")

    def std(self, learner: str, treatment: str) -> float:
        v = self.values[(learner, treatment)]
        return float(np.std(v, ddof=1)) if len(v) > 1 else float("nan")

    def to_csv(self) -> str:
        lines = ["scenario,learner,treatment,metric,mean,std,n_runs"]
        for learner in self.learners:
            for treatment in self.treatments:
                v = self.values[(learner, treatment)]
                lines.append(",".join([
                    self.scenario, learner, treatment,
                    self.metric_name(learner),
                    repr(self.mean(learner, treatment)),
                    repr(self.std(learner, treatment)),
                    str(len(v)),
                ]))
        return "\n".join(lines) + "\n"

    def runs_to_csv(self) -> str:
        lines = ["scenario,run_index,learner,treatment,metric,value"]
        for pos, run in enumerate(self.run_indices):
            for learner in self.learners:
                for treatment in self.treatments:
                    v = self.values[(learner, treatment)][pos]
                    lines.append(",".join([
                        self.scenario, str(run), learner, treatment,
                        self.metric_name(learner), repr(float(v)),
                    ]))
        return "\n".join(lines) + "\n"


def _evaluate(model: LinearModel, test: list, learner: str) -> float:
    X = np.stack([o.features for o in test])
    if learner == "LogReg":
        labels = np.array([o.label for o in test])
        return float(np.mean(model.classify(X) == labels))
    truth = np.array([o.target for o in test])
    pred = model.predict(X)
    return float(np.mean((pred - truth) ** 2))


def _fit(learner: str, dist: DebiasedDistribution) -> LinearModel:
    if learner == "LR":
        return fit_weighted_least_squares(dist)
    return fit_weighted_logistic(dist)


_RUN_FAILURES = (NotConverged, RejectionStall, Separable, RankDeficient, LogOfZero)


def run_experiment(spec: ScenarioSpec, learners=("LR",),
                   solver_config=None) -> ExperimentReport:
    """Replicate the scenario spec.n_runs times and score each learner under
    each treatment on the held-out unbiased test set.

    Treatments: "standard" trains on the blind pool with uniform weights,
    "debiased" on the solver's weights, and "unbiased_only" (present only
    when the scenario has a whole_space stratum) on that stratum alone.
    Runs that fail with a solver or fit error are excluded and recorded in
    failures with their messages.
    """
    learners = tuple(learners)
    unknown = set(learners) - set(_LEARNERS)
    if unknown:
        raise ValueError("unknown learners %s; supported: %s"
                         % (sorted(unknown), _LEARNERS))
    unbiased = spec.unbiased_strata()
    treatments = ("standard", "debiased") + (("unbiased_only",) if unbiased else ())

    values = {(le, tr): [] for le in learners for tr in treatments}
    run_indices = []
    failures = []

    for r in range(spec.n_runs):
        try:
            pooled, test = generate_scenario(spec, r)
            result = vardi_solver.solve(pooled, solver_config)
            dists = {
                "standard": pooled_empirical_measure(pooled),
                "debiased": DebiasedDistribution(
                    observations=pooled.observations, weights=result.weights
                ),
            }
            if unbiased:
                mask = np.isin(pooled.sample_ids, unbiased)
                obs = tuple(o for o, keep in zip(pooled.observations, mask) if keep)
                dists["unbiased_only"] = DebiasedDistribution(
                    observations=obs, weights=np.full(len(obs), 1.0 / len(obs))
                )
            run_scores = {
                (le, tr): _evaluate(_fit(le, dists[tr]), test, le)
                for le in learners for tr in treatments
            }
        except _RUN_FAILURES as exc:
            failures.append((r, "%s: %s" % (type(exc).__name__, exc)))
            continue
        run_indices.append(r)
        for key, score in run_scores.items():
            values[key].append(score)

    return ExperimentReport(
        scenario=spec.name,
        learners=learners,
        treatments=treatments,
        n_runs=spec.n_runs,
        run_indices=tuple(run_indices),
        values={k: np.asarray(v) for k, v in values.items()},
        failures=tuple(failures),
    )


# ---------------------------------------------------------------------------
# Population quantities for the Gaussian presets
# ---------------------------------------------------------------------------

CHI3_MEAN = 2.0 * np.sqrt(2.0 / np.pi)  # mean Euclidean norm of a 3-d standard normal


def true_normalizers(spec: ScenarioSpec) -> np.ndarray:
    """Closed-form population means of the biasing functions under the
    3-d Gaussian base.  Raises ValueError for specs without a closed form.
    """
    if spec.base_distribution != GAUSSIAN3D:
        raise ValueError("closed-form normalizers exist only for the Gaussian base")
    out = []
    for cfg in spec.biasing_defs:
        kind = cfg["kind"]
        if kind == "whole_space":
            out.append(1.0)
        elif kind == "norm_ball":
            out.append(chi2.cdf(cfg["r"] ** 2, df=3))
        elif kind == "norm_shell":
            out.append(chi2.sf(cfg["r"] ** 2, df=3))
        elif kind == "component_band":
            out.append(2.0 * normal_dist.cdf(cfg["c"]) - 1.0)
        elif kind == "component_above":
            out.append(normal_dist.sf(cfg["c"]))
        elif kind == "component_below":
            out.append(normal_dist.cdf(cfg["c"]))
        elif kind == "censor":
            if spec.target == "norm":
                out.append(chi2.cdf(max(cfg["tau"], 0.0) ** 2, df=3))
            elif spec.target == "component":
                out.append(normal_dist.cdf(cfg["tau"]))
            else:
                raise ValueError("no closed form for censoring a supplied target")
        else:
            raise ValueError("no closed form for biasing kind %r" % (kind,))
    return np.array(out)


def true_normalizers_mc(spec: ScenarioSpec, draws: int = 10_000_000,
                        seed: int = 0, chunk: int = 1_000_000) -> np.ndarray:
    """Monte Carlo estimate of the population normalizers; the independent
    cross-check of true_normalizers."""
    if spec.base_distribution != GAUSSIAN3D:
        raise ValueError("MC normalizers are defined for the Gaussian base")
    functions = spec.functions()
    rng = np.random.default_rng(seed)
    total = np.zeros(spec.K)
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        X, y = _gaussian_batch(rng, m, spec)
        for k, fn in enumerate(functions):
            total[k] += _bias_column(fn, X, y).sum()
        done += m
    return total / draws


def gaussian_norm_risk(model: LinearModel) -> float:
    """Population squared-error risk of a linear predictor of the feature
    norm under the 3-d Gaussian base, in closed form.

    E (||x|| - a.x - b)^2 = 3 + ||a||^2 + b^2 - 2 b E||x||, using that x and
    ||x|| are uncorrelated coordinatewise by symmetry.
    """
    a = model.coefficients[:-1]
    b = model.coefficients[-1]
    return float(3.0 + a @ a + b * b - 2.0 * b * CHI3_MEAN)


def model_grid() -> list:
    """Fixed 16-model grid used by the rate check: slopes in {-0.25, 0.25}^3
    crossed with intercepts {1.0, 1.6}."""
    grid = []
    for slopes in itertools.product((-0.25, 0.25), repeat=3):
        for intercept in (1.0, 1.6):
            grid.append(LinearModel(coefficients=np.array(slopes + (intercept,)),
                                    task="regression"))
    return grid


# ---------------------------------------------------------------------------
# Convergence rate check
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RateCheckResult:
    """Log-log slopes of estimation error against pool size.

    A slope near -0.5 is the root-n rate.  Slopes are None when the mean
    error vanishes at some grid size (degenerate specs, e.g. a single
    unbiased stratum, where the normalizer error is exactly zero).
    """

    n_grid: tuple
    replicates: int
    mean_normalizer_err: np.ndarray
    mean_sup_deviation: np.ndarray
    slope_normalizer_err: float | None
    slope_sup_deviation: float | None

    def to_json(self) -> str:
        return json.dumps({
            "n_grid": list(self.n_grid),
            "replicates": self.replicates,
            "mean_normalizer_err": self.mean_normalizer_err.tolist(),
            "mean_sup_deviation": self.mean_sup_deviation.tolist(),
            "slope_normalizer_err": self.slope_normalizer_err,
            "slope_sup_deviation": self.slope_sup_deviation,
        }, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["n,mean_normalizer_err,mean_sup_deviation"]
        for i, n in enumerate(self.n_grid):
            lines.append(",".join([
                str(n),
                repr(float(self.mean_normalizer_err[i])),
                repr(float(self.mean_sup_deviation[i])),
            ]))
        return "\n".join(lines) + "\n"


def _scale_sizes(sizes, n: int) -> tuple:
    """Scale the stratum split to a total of n, largest remainders first."""
    total = sum(sizes)
    raw = [s * n / total for s in sizes]
    base = [int(np.floor(r)) for r in raw]
    rem = n - sum(base)
    order = sorted(range(len(sizes)), key=lambda i: (base[i] - raw[i], i))
    for i in order[:rem]:
        base[i] += 1
    for i in range(len(base)):          # keep every stratum populated
        if base[i] == 0:
            base[np.argmax(base)] -= 1
            base[i] = 1
    return tuple(base)


def _slope(n_grid, means) -> float | None:
    if np.any(means <= 0.0):
        return None
    return float(np.polyfit(np.log(np.asarray(n_grid, float)),
                            np.log(means), 1)[0])


def rate_check(spec: ScenarioSpec, n_grid=(500, 1000, 2000, 4000),
               replicates: int = 200, solver_config=None) -> RateCheckResult:
    """Estimate convergence rates by scaling the scenario's stratum split.

    For each n the scenario's sizes are rescaled to total n, `replicates`
    pools are drawn, and two errors are averaged: the Euclidean distance
    between estimated and true normalizers, and the largest gap between
    debiased empirical risk and population risk over the fixed model grid.
    Requires a Gaussian-base scenario with closed-form normalizers.
    """
    truth = true_normalizers(spec)
    grid = model_grid()
    loss = squared_error()

    mean_omega = []
    mean_dev = []
    for n in n_grid:
        spec_n = replace(spec, sample_sizes=_scale_sizes(spec.sample_sizes, n),
                         seed=spec.seed + n)
        omega_errs = np.empty(replicates)
        devs = np.empty(replicates)
        for rep in range(replicates):
            pooled, _ = generate_scenario(spec_n, rep)
            result = vardi_solver.solve(pooled, solver_config)
            omega_errs[rep] = np.linalg.norm(result.Omega_hat - truth)
            dist = DebiasedDistribution(observations=pooled.observations,
                                        weights=result.weights)
            devs[rep] = max_risk_deviation(dist, gaussian_norm_risk, grid, loss)
        mean_omega.append(omega_errs.mean())
        mean_dev.append(devs.mean())

    mean_omega = np.asarray(mean_omega)
    mean_dev = np.asarray(mean_dev)
    return RateCheckResult(
        n_grid=tuple(int(n) for n in n_grid),
        replicates=int(replicates),
        mean_normalizer_err=mean_omega,
        mean_sup_deviation=mean_dev,
        slope_normalizer_err=_slope(n_grid, mean_omega),
        slope_sup_deviation=_slope(n_grid, mean_dev),
    )
