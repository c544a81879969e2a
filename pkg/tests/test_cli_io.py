import json

import numpy as np
import pytest

from debias import ParseError, SchemaError, solve
from debias.cli_io import (
    main,
    read_bias_config,
    read_dataset_csv,
    read_plain_dataset,
    read_scenario_config,
    read_weights_csv,
)


BIAS_JSON = '[{"kind": "norm_ball", "r": 1.0}, {"kind": "whole_space"}]'

# interleaved sample ids on purpose: the pooled order differs from file order
DATA_CSV = """x0,y,sample_id
0.5,1.0,0
0.2,0.5,1
-0.5,2.0,0
3.0,4.0,1
"""

DISCONNECTED_CSV = """x0,y,sample_id
0.5,1.0,0
-0.5,2.0,0
3.0,4.0,1
4.0,1.0,1
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "data.csv").write_text(DATA_CSV)
    (tmp_path / "bias.json").write_text(BIAS_JSON)
    (tmp_path / "disc.csv").write_text(DISCONNECTED_CSV)
    return tmp_path


# ---------------------------------------------------------------------------
# Readers
# ---------------------------------------------------------------------------


def test_read_dataset_groups_by_sample(workdir):
    samples, ids = read_dataset_csv(str(workdir / "data.csv"), K=2)
    assert [len(s) for s in samples] == [2, 2]
    assert np.array_equal(ids, [0, 1, 0, 1])
    assert samples[0][0].features[0] == 0.5
    assert samples[0][1].features[0] == -0.5
    assert samples[1][1].target == 4.0


def test_read_dataset_errors_cite_lines(workdir):
    bad = workdir / "bad.csv"
    bad.write_text("x0,y,sample_id\n1.0,2.0,0\noops,2.0,1\n")
    with pytest.raises(ParseError) as err:
        read_dataset_csv(str(bad), K=2)
    assert "line 3" in str(err.value)

    bad.write_text("x0,y,sample_id\n1.0,2.0,0\n2.0,1.0,7\n")
    with pytest.raises(SchemaError) as err:
        read_dataset_csv(str(bad), K=2)
    assert "line 3" in str(err.value)


def test_read_dataset_schema_checks(workdir):
    p = workdir / "bad.csv"
    p.write_text("x0,x2,sample_id\n1.0,2.0,0\n")        # x1 missing
    with pytest.raises(SchemaError):
        read_dataset_csv(str(p), K=1)
    p.write_text("x0,y\n1.0,2.0\n")                     # no sample_id
    with pytest.raises(SchemaError):
        read_dataset_csv(str(p), K=1)
    p.write_text("x0,sample_id,mood\n1.0,0,fine\n")     # unknown column
    with pytest.raises(SchemaError):
        read_dataset_csv(str(p), K=1)
    p.write_text("x0,sample_id\n1.0,0\n")               # sample 1 empty
    with pytest.raises(SchemaError):
        read_dataset_csv(str(p), K=2)
    p.write_text("x0,sample_id\n")                      # header only
    with pytest.raises(SchemaError):
        read_dataset_csv(str(p), K=1)


def test_read_plain_dataset_ignores_sample_id(workdir):
    rows = read_plain_dataset(str(workdir / "data.csv"))
    assert len(rows) == 4
    assert rows[3].target == 4.0


def test_read_plain_dataset_labels(tmp_path):
    p = tmp_path / "lab.csv"
    p.write_text("x0,label\n1.5,1\n-0.5,-1\n2.0,+1\n")
    rows = read_plain_dataset(str(p))
    assert [o.label for o in rows] == [1, -1, 1]
    p.write_text("x0,label\n1.5,2\n")
    with pytest.raises(ParseError):
        read_plain_dataset(str(p))


def test_read_bias_config_json_forms(tmp_path):
    p = tmp_path / "b.json"
    p.write_text(BIAS_JSON)
    defs, funcs = read_bias_config(str(p))
    assert len(funcs) == 2 and funcs[0].kind == "indicator"
    p.write_text('{"bias": %s}' % BIAS_JSON)
    defs2, funcs2 = read_bias_config(str(p))
    assert defs == defs2
    p.write_text("{not json")
    with pytest.raises(ParseError):
        read_bias_config(str(p))
    p.write_text('{"bias": []}')
    with pytest.raises(SchemaError):
        read_bias_config(str(p))
    p.write_text('[{"kind": "warp_field", "q": 1}]')
    with pytest.raises(SchemaError):
        read_bias_config(str(p))


def test_read_bias_config_toml(tmp_path):
    p = tmp_path / "b.toml"
    p.write_text('[[bias]]\nkind = "norm_ball"\nr = 0.8\n'
                 '[[bias]]\nkind = "whole_space"\n')
    defs, funcs = read_bias_config(str(p))
    assert defs[0] == {"kind": "norm_ball", "r": 0.8}
    assert len(funcs) == 2
    p.write_text("kind = [broken")
    with pytest.raises(ParseError):
        read_bias_config(str(p))


def test_read_scenario_config(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({
        "name": "mini",
        "bias": [{"kind": "norm_ball", "r": 1.0}, {"kind": "whole_space"}],
        "sample_sizes": [30, 10],
        "test_size": 20,
        "n_runs": 4,
        "seed": 9,
    }))
    spec = read_scenario_config(str(p))
    assert spec.name == "mini" and spec.sample_sizes == (30, 10)
    assert spec.n_runs == 4 and spec.seed == 9

    t = tmp_path / "s.toml"
    t.write_text('name = "mini"\nsample_sizes = [30, 10]\ntest_size = 20\n'
                 '[[bias]]\nkind = "norm_ball"\nr = 1.0\n'
                 '[[bias]]\nkind = "whole_space"\n')
    spec2 = read_scenario_config(str(t))
    assert spec2.sample_sizes == spec.sample_sizes
    assert spec2.biasing_defs == spec.biasing_defs

    p.write_text(json.dumps({"bias": [{"kind": "whole_space"}]}))
    with pytest.raises(SchemaError):
        read_scenario_config(str(p))       # sample_sizes missing
    p.write_text(json.dumps({
        "bias": [{"kind": "whole_space"}], "sample_sizes": [10],
        "test_size": 0,
    }))
    with pytest.raises(SchemaError):
        read_scenario_config(str(p))


def test_read_weights_csv(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("weight\n0.25\n0.75\n")
    assert np.array_equal(read_weights_csv(str(p)), [0.25, 0.75])
    p.write_text("0.5\n0.5\n")              # headerless is fine
    assert np.array_equal(read_weights_csv(str(p)), [0.5, 0.5])
    p.write_text("weight\nmuch\n")
    with pytest.raises(ParseError) as err:
        read_weights_csv(str(p))
    assert "line 2" in str(err.value)


# ---------------------------------------------------------------------------
# Commands and exit codes
# ---------------------------------------------------------------------------


def test_validate_ok_and_report_file(workdir, capsys):
    out = workdir / "out"
    code = main(["validate", "--data", str(workdir / "data.csv"),
                 "--bias", str(workdir / "bias.json"), "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["support_cover_ok"] and doc["strongly_connected"]
    assert json.loads(capsys.readouterr().out) == doc


def test_validate_disconnected_exits_2(workdir):
    code = main(["validate", "--data", str(workdir / "disc.csv"),
                 "--bias", str(workdir / "bias.json")])
    assert code == 2


def test_solve_writes_aligned_weights(workdir):
    out = workdir / "out"
    code = main(["solve", "--data", str(workdir / "data.csv"),
                 "--bias", str(workdir / "bias.json"), "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["converged"] is True
    assert report["W_hat"] == pytest.approx([0.5, 1.0], abs=1e-8)

    w = read_weights_csv(str(out / "weights.csv"))
    assert abs(w.sum() - 1.0) < 1e-10
    # file order is ball, whole, ball, whole; pooled order is ball, ball,
    # whole, whole: the 3.0 row (file row 4) is the out-of-ball point
    assert w == pytest.approx([1 / 6, 1 / 6, 1 / 6, 1 / 2], abs=1e-8)


def test_solve_rerun_is_byte_identical(workdir):
    out_a, out_b = workdir / "a", workdir / "b"
    for out in (out_a, out_b):
        assert main(["solve", "--data", str(workdir / "data.csv"),
                     "--bias", str(workdir / "bias.json"),
                     "--out", str(out)]) == 0
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
    assert (out_a / "weights.csv").read_bytes() == (out_b / "weights.csv").read_bytes()


def test_solve_gate_and_force(workdir):
    code = main(["solve", "--data", str(workdir / "disc.csv"),
                 "--bias", str(workdir / "bias.json"),
                 "--out", str(workdir / "g")])
    assert code == 2
    out = workdir / "forced"
    code = main(["solve", "--data", str(workdir / "disc.csv"),
                 "--bias", str(workdir / "bias.json"),
                 "--out", str(out), "--force"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["non_unique"] is True


def test_solve_nonconvergence_exits_3_with_best_dump(workdir):
    out = workdir / "nc"
    code = main(["solve", "--data", str(workdir / "data.csv"),
                 "--bias", str(workdir / "bias.json"), "--out", str(out),
                 "--method", "fixed-step-gradient", "--max-iter", "2"])
    assert code == 3
    dump = json.loads((out / "report.json").read_text())
    assert dump["converged"] is False
    assert len(dump["W_best"]) == 2
    assert dump["iterations"] == 2
    assert dump["residual"] > 0


def test_weights_command_stdout(workdir, capsys):
    code = main(["weights", "--data", str(workdir / "data.csv"),
                 "--bias", str(workdir / "bias.json")])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "weight"
    vals = [float(v) for v in lines[1:5]]
    assert vals == pytest.approx([1 / 6, 1 / 6, 1 / 6, 1 / 2], abs=1e-8)


def test_parse_failure_exits_1(workdir, capsys):
    bad = workdir / "bad.csv"
    bad.write_text("x0,y,sample_id\n1.0,2.0,zero\n")
    code = main(["solve", "--data", str(bad),
                 "--bias", str(workdir / "bias.json")])
    assert code == 1
    assert "line 2" in capsys.readouterr().err


def test_fit_regression(workdir):
    out = workdir / "fit"
    code = main(["fit", "--data", str(workdir / "data.csv"),
                 "--learner", "LR", "--out", str(out)])
    assert code == 0
    model = json.loads((out / "model.json").read_text())
    assert model["task"] == "regression"
    assert len(model["coefficients"]) == 2
    preds = (out / "predictions.csv").read_text().splitlines()
    assert preds[0] == "y_pred" and len(preds) == 5


def test_fit_with_solved_weights_matches_debiased_fit(workdir):
    out = workdir / "sw"
    main(["solve", "--data", str(workdir / "data.csv"),
          "--bias", str(workdir / "bias.json"), "--out", str(out)])
    code = main(["fit", "--data", str(workdir / "data.csv"),
                 "--weights", str(out / "weights.csv"),
                 "--learner", "LR", "--out", str(out)])
    assert code == 0
    got = json.loads((out / "model.json").read_text())["coefficients"]

    from debias import fit_least_squares
    samples, ids = read_dataset_csv(str(workdir / "data.csv"), K=2)
    obs = samples[0] + samples[1]
    X = np.stack([o.features for o in obs])
    y = np.array([o.target for o in obs])
    pooled_w = read_weights_csv(str(out / "weights.csv"))
    # map file-order weights back to pooled order for the reference fit
    file_rows = [0, 2, 1, 3]
    want = fit_least_squares(X, y, pooled_w[file_rows])
    assert got == pytest.approx(list(want), abs=1e-10)


def test_fit_weight_length_mismatch_exits_1(workdir, tmp_path):
    wfile = tmp_path / "w.csv"
    wfile.write_text("weight\n0.5\n0.5\n")
    code = main(["fit", "--data", str(workdir / "data.csv"),
                 "--weights", str(wfile), "--learner", "LR"])
    assert code == 1


def test_fit_logreg(tmp_path):
    rng = np.random.default_rng(2)
    lines = ["x0,x1,label"]
    for _ in range(60):
        x = rng.standard_normal(2)
        label = 1 if x[0] + rng.standard_normal() > 0 else -1
        lines.append("%r,%r,%d" % (float(x[0]), float(x[1]), label))
    data = tmp_path / "lab.csv"
    data.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    code = main(["fit", "--data", str(data), "--learner", "LogReg",
                 "--out", str(out)])
    assert code == 0
    model = json.loads((out / "model.json").read_text())
    assert model["task"] == "binary-classification"
    preds = (out / "predictions.csv").read_text().splitlines()[1:]
    assert set(preds) <= {"1", "-1"}


def test_simulate_byte_identical_and_seeded(tmp_path):
    spec = {
        "name": "mini",
        "bias": [{"kind": "norm_ball", "r": 1.0}, {"kind": "whole_space"}],
        "sample_sizes": [40, 20],
        "test_size": 25,
    }
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps(spec))
    out_a, out_b, out_c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out in (out_a, out_b):
        assert main(["simulate", "--config", str(cfg), "--runs", "3",
                     "--seed", "7", "--out", str(out)]) == 0
    assert (out_a / "experiment.csv").read_bytes() == \
        (out_b / "experiment.csv").read_bytes()
    assert (out_a / "runs.csv").read_bytes() == (out_b / "runs.csv").read_bytes()
    assert main(["simulate", "--config", str(cfg), "--runs", "3",
                 "--seed", "8", "--out", str(out_c)]) == 0
    assert (out_a / "runs.csv").read_bytes() != (out_c / "runs.csv").read_bytes()


def test_simulate_unknown_preset_exits_1(capsys):
    code = main(["simulate", "--preset", "zz", "--runs", "1"])
    assert code == 1
    assert "unknown preset" in capsys.readouterr().err


def test_simulate_needs_preset_or_config():
    assert main(["simulate", "--runs", "1"]) == 1


def test_rate_check_command(tmp_path):
    spec = {
        "name": "mini",
        "bias": [{"kind": "norm_ball", "r": 0.8}, {"kind": "whole_space"}],
        "sample_sizes": [50, 50],
        "test_size": 20,
    }
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps(spec))
    out = tmp_path / "rc"
    code = main(["rate-check", "--config", str(cfg), "--n-grid", "100,200",
                 "--replicates", "2", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "rate.json").read_text())
    assert doc["n_grid"] == [100, 200]
    lines = (out / "rate.csv").read_text().splitlines()
    assert len(lines) == 3
    assert main(["rate-check", "--config", str(cfg),
                 "--n-grid", "ten,20"]) == 1
