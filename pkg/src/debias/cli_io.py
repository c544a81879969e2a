"""Command line surface, file formats, and persistence.

Commands: validate (assumption diagnostics), solve (normalizers plus
debiasing weights), weights (weights only), fit (train a predictor from a
dataset and a weight column), simulate (scenario experiments), rate-check
(convergence-rate measurement).

Dataset CSV schema: a header row; feature columns named x0..x{d-1}; an
optional target column y; an optional label column with values -1/+1; and,
for validate/solve/weights, a required integer sample_id column in
[0, K) assigning each row to the sample it was drawn in.  Biasing
functions come from a JSON or TOML config document holding a list of
declarative definitions, e.g. {"kind": "norm_ball", "r": 0.8}.

Exit codes: 0 success, 1 parse or schema failure, 2 assumption failure,
3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .assumptions import assumption_report
from .bias_model import (
    Observation,
    biasing_from_config,
    evaluate_bias_matrix,
)
from .errors import (
    DebiasError,
    NotConverged,
    ParseError,
    SchemaError,
    UnknownPreset,
)
from .scenario_lab import ScenarioSpec, preset, rate_check, run_experiment
from .vardi_solver import SolverConfig, solve
from .weighted_erm import (
    LinearModel,
    fit_least_squares,
    fit_logistic,
)

__all__ = [
    "RunConfig",
    "main",
    "read_dataset_csv",
    "read_plain_dataset",
    "read_bias_config",
    "read_scenario_config",
    "read_weights_csv",
]


@dataclass(frozen=True)
class RunConfig:
    """One resolved CLI invocation."""

    command: str
    data_path: str | None = None
    bias_path: str | None = None
    weights_path: str | None = None
    config_path: str | None = None
    out_dir: str | None = None
    kappa: float = 1e-3
    force: bool = False
    method: str = "auto"
    grad_tol: float = 1e-9
    max_iter: int = 10_000
    step_size: float | None = None
    preset_name: str | None = None
    runs: int | None = None
    seed: int | None = None
    learners: tuple = ("LR",)
    learner: str = "LR"
    n_grid: tuple = (500, 1000, 2000, 4000)
    replicates: int = 200

    def solver_config(self) -> SolverConfig:
        return SolverConfig(method=self.method, grad_tol=self.grad_tol,
                            max_iter=self.max_iter, step_size=self.step_size)


# ---------------------------------------------------------------------------
# Readers
# ---------------------------------------------------------------------------


def _read_rows(path: str):
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc
    if not rows:
        raise ParseError("%s is empty" % path)
    return [[cell.strip() for cell in row] for row in rows]


def _feature_columns(header, path):
    feature_idx = {}
    for pos, name in enumerate(header):
        if name.startswith("x") and name[1:].isdigit():
            feature_idx[int(name[1:])] = pos
    if not feature_idx:
        raise SchemaError("%s has no feature columns x0..x{d-1}" % path)
    d = max(feature_idx) + 1
    missing = [j for j in range(d) if j not in feature_idx]
    if missing:
        raise SchemaError("%s is missing feature columns %s"
                          % (path, ["x%d" % j for j in missing]))
    return [feature_idx[j] for j in range(d)], d


def _parse_observation(row, line_no, feat_pos, y_pos, label_pos, path):
    try:
        feats = np.array([float(row[p]) for p in feat_pos])
    except (ValueError, IndexError) as exc:
        raise ParseError("%s line %d: bad feature value (%s)"
                         % (path, line_no, exc)) from exc
    target = None
    if y_pos is not None and y_pos < len(row) and row[y_pos] != "":
        try:
            target = float(row[y_pos])
        except ValueError as exc:
            raise ParseError("%s line %d: bad target value %r"
                             % (path, line_no, row[y_pos])) from exc
    label = None
    if label_pos is not None and label_pos < len(row) and row[label_pos] != "":
        if row[label_pos] not in ("-1", "1", "+1"):
            raise ParseError("%s line %d: label must be -1 or +1, got %r"
                             % (path, line_no, row[label_pos]))
        label = int(row[label_pos])
    try:
        return Observation(features=feats, target=target, label=label)
    except ValueError as exc:
        raise SchemaError("%s line %d: %s" % (path, line_no, exc)) from exc


def read_dataset_csv(path: str, K: int):
    """Read a sample-annotated dataset.

    Returns (samples, ids): samples is a length-K list of observation
    lists preserving input order inside each sample, ids the sample_id of
    every input row in file order, so callers can realign pooled-order
    vectors with the file.
    """
    rows = _read_rows(path)
    header, data = rows[0], rows[1:]
    if not data:
        raise SchemaError("%s has a header but no data rows" % path)
    feat_pos, _ = _feature_columns(header, path)
    known = {"y", "label", "sample_id"}
    for name in header:
        if name.startswith("x") and name[1:].isdigit():
            continue
        if name not in known:
            raise SchemaError("%s has unknown column %r" % (path, name))
    if "sample_id" not in header:
        raise SchemaError("%s is missing the sample_id column" % path)
    sid_pos = header.index("sample_id")
    y_pos = header.index("y") if "y" in header else None
    label_pos = header.index("label") if "label" in header else None

    samples = [[] for _ in range(K)]
    ids = []
    for i, row in enumerate(data):
        line_no = i + 2
        if len(row) != len(header):
            raise ParseError("%s line %d: expected %d fields, got %d"
                             % (path, line_no, len(header), len(row)))
        try:
            sid = int(row[sid_pos])
        except ValueError as exc:
            raise ParseError("%s line %d: bad sample_id %r"
                             % (path, line_no, row[sid_pos])) from exc
        if not (0 <= sid < K):
            raise SchemaError("%s line %d: sample_id %d outside [0, %d)"
                              % (path, line_no, sid, K))
        obs = _parse_observation(row, line_no, feat_pos, y_pos, label_pos, path)
        samples[sid].append(obs)
        ids.append(sid)
    empty = [k for k, s in enumerate(samples) if not s]
    if empty:
        raise SchemaError("%s has no rows for sample ids %s" % (path, empty))
    return samples, np.array(ids)


def read_plain_dataset(path: str):
    """Read a dataset without sample assignment (scenario base pools,
    fit inputs).  A sample_id column, if present, is ignored."""
    rows = _read_rows(path)
    header, data = rows[0], rows[1:]
    if not data:
        raise SchemaError("%s has a header but no data rows" % path)
    feat_pos, _ = _feature_columns(header, path)
    known = {"y", "label", "sample_id"}
    for name in header:
        if name.startswith("x") and name[1:].isdigit():
            continue
        if name not in known:
            raise SchemaError("%s has unknown column %r" % (path, name))
    y_pos = header.index("y") if "y" in header else None
    label_pos = header.index("label") if "label" in header else None
    out = []
    for i, row in enumerate(data):
        line_no = i + 2
        if len(row) != len(header):
            raise ParseError("%s line %d: expected %d fields, got %d"
                             % (path, line_no, len(header), len(row)))
        out.append(_parse_observation(row, line_no, feat_pos, y_pos,
                                      label_pos, path))
    return out


def _load_structured(path: str):
    try:
        raw = open(path, "rb").read()
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except Exception as exc:
            raise ParseError("cannot parse TOML %s: %s" % (path, exc)) from exc
    try:
        return json.loads(raw.decode("utf-8"))
    except Exception as exc:
        raise ParseError("cannot parse JSON %s: %s" % (path, exc)) from exc


def read_bias_config(path: str):
    """Read a biasing-function config document (JSON or TOML).

    Accepts either a bare list of definitions or a mapping with a "bias"
    key holding the list.  Returns (definitions, functions).
    """
    doc = _load_structured(path)
    if isinstance(doc, dict):
        doc = doc.get("bias")
    if not isinstance(doc, list) or not doc:
        raise SchemaError("%s must hold a nonempty list of biasing definitions"
                          % path)
    functions = tuple(biasing_from_config(d) for d in doc)
    return [dict(d) for d in doc], functions


def read_scenario_config(path: str) -> ScenarioSpec:
    """Read a full scenario description (JSON or TOML)."""
    doc = _load_structured(path)
    if not isinstance(doc, dict):
        raise SchemaError("%s must hold a scenario mapping" % path)
    if "bias" not in doc or "sample_sizes" not in doc:
        raise SchemaError("%s needs 'bias' and 'sample_sizes'" % path)
    kwargs = {
        "name": doc.get("name", "custom"),
        "biasing_defs": tuple(doc["bias"]),
        "sample_sizes": tuple(doc["sample_sizes"]),
    }
    for key in ("test_size", "target", "target_component", "n_runs", "seed"):
        if key in doc:
            kwargs[key] = doc[key]
    if "csv" in doc:
        kwargs["csv_path"] = doc["csv"]
        kwargs["base_distribution"] = "custom-csv"
    if "base_distribution" in doc:
        kwargs["base_distribution"] = doc["base_distribution"]
    for d in kwargs["biasing_defs"]:
        biasing_from_config(d)      # fail now with a SchemaError, not mid-run
    try:
        return ScenarioSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError("%s: %s" % (path, exc)) from exc


def read_weights_csv(path: str) -> np.ndarray:
    """Read a single-column weight file; a 'weight' header row is optional."""
    rows = _read_rows(path)
    start = 1 if rows and rows[0] and rows[0][0] == "weight" else 0
    vals = []
    for i, row in enumerate(rows[start:]):
        line_no = i + start + 1
        if len(row) != 1:
            raise ParseError("%s line %d: expected one field" % (path, line_no))
        try:
            vals.append(float(row[0]))
        except ValueError as exc:
            raise ParseError("%s line %d: bad weight %r"
                             % (path, line_no, row[0])) from exc
    if not vals:
        raise SchemaError("%s holds no weights" % path)
    return np.array(vals)


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _emit(out_dir: str | None, filename: str, text: str, to_stdout: bool):
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, filename), "w", newline="\n") as f:
            f.write(text)
    if to_stdout:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _weights_csv(weights: np.ndarray) -> str:
    return "weight\n" + "\n".join(repr(float(w)) for w in weights) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _load_problem(cfg: RunConfig):
    defs, functions = read_bias_config(cfg.bias_path)
    samples, ids = read_dataset_csv(cfg.data_path, K=len(functions))
    pooled = evaluate_bias_matrix(samples, functions)
    # pooled order is sample-major; map each input row to its pooled slot
    offsets = np.concatenate([[0], np.cumsum(pooled.sizes[:-1])])
    counters = np.zeros(pooled.K, dtype=np.int64)
    row_to_pooled = np.empty(len(ids), dtype=np.int64)
    for j, sid in enumerate(ids):
        row_to_pooled[j] = offsets[sid] + counters[sid]
        counters[sid] += 1
    return pooled, row_to_pooled


def cmd_validate(cfg: RunConfig) -> int:
    pooled, _ = _load_problem(cfg)
    report = assumption_report(pooled, kappa=cfg.kappa)
    _emit(cfg.out_dir, "report.json", report.to_json() + "\n", to_stdout=True)
    return 0 if (report.support_cover_ok and report.strongly_connected) else 2


def cmd_solve_and_weights(cfg: RunConfig, weights_only: bool = False) -> int:
    pooled, row_to_pooled = _load_problem(cfg)
    report = assumption_report(pooled, kappa=cfg.kappa)
    if not (report.support_cover_ok and report.strongly_connected) and not cfg.force:
        sys.stderr.write(report.to_json() + "\n")
        sys.stderr.write("assumption checks failed; rerun with --force to "
                         "solve anyway\n")
        return 2
    try:
        result = solve(pooled, cfg.solver_config())
    except NotConverged as exc:
        dump = json.dumps({
            "converged": False,
            "W_best": [] if exc.W_best is None else list(map(float, exc.W_best)),
            "residual": exc.residual,
            "iterations": exc.iterations,
        }, indent=2, sort_keys=True)
        _emit(cfg.out_dir, "report.json", dump + "\n", to_stdout=False)
        sys.stderr.write("solver did not converge: %s\n" % exc)
        return 3
    if not weights_only:
        _emit(cfg.out_dir, "report.json", result.to_json() + "\n",
              to_stdout=cfg.out_dir is None)
    _emit(cfg.out_dir, "weights.csv",
          _weights_csv(result.weights[row_to_pooled]),
          to_stdout=cfg.out_dir is None and weights_only)
    if cfg.out_dir is not None or weights_only:
        sys.stdout.write(
            "converged=%s iterations=%d max|residual|=%.3g non_unique=%s\n"
            % (result.converged, result.iterations,
               float(np.abs(result.gamma_residual).max()), result.non_unique)
        )
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    observations = read_plain_dataset(cfg.data_path)
    n = len(observations)
    if cfg.weights_path is not None:
        w = read_weights_csv(cfg.weights_path)
        if w.shape[0] != n:
            raise SchemaError("weights file has %d rows, dataset has %d"
                              % (w.shape[0], n))
        if w.min() < 0:
            raise SchemaError("weights must be nonnegative")
    else:
        w = np.full(n, 1.0 / n)
    X = np.stack([o.features for o in observations])
    if cfg.learner == "LR":
        y = np.array([np.nan if o.target is None else o.target
                      for o in observations])
        if np.isnan(y).any():
            raise SchemaError("fit with LR needs a target y on every row")
        model = LinearModel(coefficients=fit_least_squares(X, y, w),
                            task="regression")
        preds = model.predict(X)
    else:
        labels = np.array([0 if o.label is None else o.label
                           for o in observations])
        if (labels == 0).any():
            raise SchemaError("fit with LogReg needs a label on every row")
        model = LinearModel(coefficients=fit_logistic(X, labels, w),
                            task="binary-classification")
        preds = model.classify(X)
    _emit(cfg.out_dir, "model.json", model.to_json() + "\n",
          to_stdout=cfg.out_dir is None)
    pred_csv = "y_pred\n" + "\n".join(
        repr(float(p)) if cfg.learner == "LR" else str(int(p)) for p in preds
    ) + "\n"
    _emit(cfg.out_dir, "predictions.csv", pred_csv, to_stdout=False)
    return 0


def _resolve_spec(cfg: RunConfig) -> ScenarioSpec:
    if cfg.preset_name is not None:
        spec = preset(cfg.preset_name)
    elif cfg.config_path is not None:
        spec = read_scenario_config(cfg.config_path)
    else:
        raise SchemaError("need --preset or --config")
    if cfg.runs is not None:
        spec = replace(spec, n_runs=cfg.runs)
    if cfg.seed is not None:
        spec = replace(spec, seed=cfg.seed)
    return spec


def cmd_simulate(cfg: RunConfig) -> int:
    spec = _resolve_spec(cfg)
    report = run_experiment(spec, learners=cfg.learners,
                            solver_config=cfg.solver_config())
    _emit(cfg.out_dir, "experiment.csv", report.to_csv(),
          to_stdout=cfg.out_dir is None)
    _emit(cfg.out_dir, "runs.csv", report.runs_to_csv(), to_stdout=False)
    if report.failures:
        sys.stderr.write("%d of %d runs failed; first: %s\n"
                         % (len(report.failures), spec.n_runs,
                            report.failures[0][1]))
    return 0


def cmd_rate_check(cfg: RunConfig) -> int:
    spec = _resolve_spec(cfg)
    result = rate_check(spec, n_grid=cfg.n_grid, replicates=cfg.replicates,
                        solver_config=cfg.solver_config())
    _emit(cfg.out_dir, "rate.json", result.to_json() + "\n",
          to_stdout=cfg.out_dir is None)
    _emit(cfg.out_dir, "rate.csv", result.to_csv(), to_stdout=False)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="debias",
        description="Debiased empirical risk minimization from multiple "
                    "selection-biased samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_solver_opts(p):
        p.add_argument("--method", default="auto",
                       choices=["fixed-step-gradient", "quasi-newton", "auto"])
        p.add_argument("--grad-tol", type=float, default=1e-9)
        p.add_argument("--max-iter", type=int, default=10_000)
        p.add_argument("--step-size", type=float, default=None)

    def add_io_opts(p):
        p.add_argument("--data", required=True, help="dataset CSV")
        p.add_argument("--bias", required=True, help="biasing config (JSON/TOML)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--kappa", type=float, default=1e-3)

    p = sub.add_parser("validate", help="run assumption diagnostics")
    add_io_opts(p)

    p = sub.add_parser("solve", help="estimate normalizers and weights")
    add_io_opts(p)
    add_solver_opts(p)
    p.add_argument("--force", action="store_true",
                   help="solve even when assumption checks fail")

    p = sub.add_parser("weights", help="emit only the weight column")
    add_io_opts(p)
    add_solver_opts(p)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("fit", help="fit a predictor from data and weights")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", default=None, help="weight CSV (default uniform)")
    p.add_argument("--learner", default="LR", choices=["LR", "LogReg"])
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="run a scenario experiment")
    p.add_argument("--preset", default=None)
    p.add_argument("--config", default=None, help="scenario config (JSON/TOML)")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--learners", default="LR",
                   help="comma-separated subset of LR,LogReg")
    p.add_argument("--out", default=None)
    add_solver_opts(p)

    p = sub.add_parser("rate-check", help="measure convergence rates")
    p.add_argument("--preset", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--n-grid", default="500,1000,2000,4000")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    add_solver_opts(p)

    return parser


def _config_from_args(args) -> RunConfig:
    kw = {"command": args.command}
    if hasattr(args, "data"):
        kw["data_path"] = args.data
    if hasattr(args, "bias"):
        kw["bias_path"] = args.bias
    if hasattr(args, "weights"):
        kw["weights_path"] = args.weights
    if hasattr(args, "config"):
        kw["config_path"] = args.config
    if hasattr(args, "out"):
        kw["out_dir"] = args.out
    if hasattr(args, "kappa"):
        kw["kappa"] = args.kappa
    if hasattr(args, "force"):
        kw["force"] = args.force
    for name in ("method", "grad_tol", "max_iter", "step_size"):
        if hasattr(args, name):
            kw[name] = getattr(args, name)
    if hasattr(args, "preset"):
        kw["preset_name"] = args.preset
    if hasattr(args, "runs"):
        kw["runs"] = args.runs
    if hasattr(args, "seed"):
        kw["seed"] = args.seed
    if hasattr(args, "learner"):
        kw["learner"] = args.learner
    if hasattr(args, "learners"):
        kw["learners"] = tuple(
            s.strip() for s in args.learners.split(",") if s.strip()
        )
    if hasattr(args, "n_grid"):
        try:
            kw["n_grid"] = tuple(int(s) for s in args.n_grid.split(","))
        except ValueError as exc:
            raise SchemaError("bad --n-grid %r" % (args.n_grid,)) from exc
    if hasattr(args, "replicates"):
        kw["replicates"] = args.replicates
    return RunConfig(**kw)


_DISPATCH = {
    "validate": cmd_validate,
    "solve": cmd_solve_and_weights,
    "weights": lambda cfg: cmd_solve_and_weights(cfg, weights_only=True),
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "rate-check": cmd_rate_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return _DISPATCH[args.command](cfg)
    except (ParseError, SchemaError, UnknownPreset) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1
    except NotConverged as exc:
        sys.stderr.write("solver did not converge: %s\n" % exc)
        return 3
    except DebiasError as exc:
        sys.stderr.write("%s: %s\n" % (type(exc).__name__, exc))
        return 2
    except ValueError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
