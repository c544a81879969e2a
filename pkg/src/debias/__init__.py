"""Debiased empirical risk minimization from multiple biased samples.

Workflow: describe how each sample was selected (bias_model), check that
the samples jointly identify the underlying distribution (assumptions),
estimate the unknown sampling normalizers and per-observation weights
(vardi_solver), then minimize weighted empirical risk (weighted_erm).
scenario_lab reproduces synthetic benchmarks and convergence-rate
measurements; cli_io exposes everything as a command line tool.
"""

from .errors import (
    BadKappa,
    DebiasError,
    DimensionMismatch,
    EvaluatorOutOfRange,
    LogOfZero,
    NonPositiveW,
    NotConverged,
    OwnWeightZero,
    ParseError,
    RankDeficient,
    RejectionStall,
    SchemaError,
    Separable,
    TaskMismatch,
    UnknownPreset,
)
from .bias_model import (
    BiasingFunction,
    DebiasedDistribution,
    Observation,
    PooledData,
    bias_values,
    biasing_from_config,
    censor_threshold,
    component_above,
    component_band,
    component_below,
    custom_bias,
    evaluate_bias_matrix,
    norm_ball,
    norm_shell,
    pooled_empirical_measure,
    whole_space,
)
from .assumptions import (
    AssumptionReport,
    OverlapGraph,
    SupportDigraph,
    assumption_report,
    check_support_cover,
    laplacian_connectivity,
    overlap_graph,
    support_connectivity,
)
from .vardi_solver import (
    LogCoordinates,
    SolverConfig,
    SolverResult,
    balance_ratios,
    compute_weights,
    estimate_normalizers,
    potential,
    potential_gradient,
    potential_hessian,
    resample,
    solve,
)
from .weighted_erm import (
    LinearModel,
    LossSpec,
    fit_least_squares,
    fit_logistic,
    fit_weighted_least_squares,
    fit_weighted_logistic,
    logistic_surrogate,
    max_risk_deviation,
    squared_error,
    weighted_risk,
    zero_one,
)
from .scenario_lab import (
    ExperimentReport,
    RateCheckResult,
    ScenarioSpec,
    gaussian_norm_risk,
    generate_scenario,
    model_grid,
    preset,
    preset_names,
    rate_check,
    run_experiment,
    true_normalizers,
    true_normalizers_mc,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "BadKappa",
    "BiasingFunction",
    "DebiasError",
    "DebiasedDistribution",
    "DimensionMismatch",
    "EvaluatorOutOfRange",
    "ExperimentReport",
    "LinearModel",
    "LogCoordinates",
    "LogOfZero",
    "LossSpec",
    "NonPositiveW",
    "NotConverged",
    "Observation",
    "OverlapGraph",
    "OwnWeightZero",
    "ParseError",
    "PooledData",
    "RankDeficient",
    "RateCheckResult",
    "RejectionStall",
    "ScenarioSpec",
    "SchemaError",
    "Separable",
    "SolverConfig",
    "SolverResult",
    "SupportDigraph",
    "TaskMismatch",
    "UnknownPreset",
    "assumption_report",
    "balance_ratios",
    "bias_values",
    "biasing_from_config",
    "censor_threshold",
    "check_support_cover",
    "component_above",
    "component_band",
    "component_below",
    "compute_weights",
    "custom_bias",
    "estimate_normalizers",
    "evaluate_bias_matrix",
    "fit_least_squares",
    "fit_logistic",
    "fit_weighted_least_squares",
    "fit_weighted_logistic",
    "gaussian_norm_risk",
    "generate_scenario",
    "laplacian_connectivity",
    "logistic_surrogate",
    "max_risk_deviation",
    "model_grid",
    "norm_ball",
    "norm_shell",
    "overlap_graph",
    "pooled_empirical_measure",
    "potential",
    "potential_gradient",
    "potential_hessian",
    "preset",
    "preset_names",
    "rate_check",
    "resample",
    "run_experiment",
    "solve",
    "squared_error",
    "support_connectivity",
    "true_normalizers",
    "true_normalizers_mc",
    "weighted_risk",
    "whole_space",
    "zero_one",
]
