import numpy as np
import pytest

from debias import (
    DebiasedDistribution,
    DimensionMismatch,
    EvaluatorOutOfRange,
    Observation,
    OwnWeightZero,
    SchemaError,
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

from oracles import direct_overlap_moments


def obs(*xs, y=None, label=None):
    return Observation(np.array(xs, dtype=float), target=y, label=label)


# ---------------------------------------------------------------------------
# Observation
# ---------------------------------------------------------------------------


def test_observation_scalar_feature_promoted():
    o = Observation(np.array(1.5))
    assert o.features.shape == (1,)
    assert o.features.dtype == np.float64


def test_observation_rejects_target_and_label_together():
    with pytest.raises(ValueError):
        Observation(np.array([1.0]), target=2.0, label=1)


def test_observation_rejects_bad_label():
    with pytest.raises(ValueError):
        Observation(np.array([1.0]), label=0)
    with pytest.raises(ValueError):
        Observation(np.array([1.0]), label=2)
    assert Observation(np.array([1.0]), label=-1).label == -1


def test_observation_rejects_matrix_features():
    with pytest.raises(DimensionMismatch):
        Observation(np.ones((2, 2)))


def test_observation_rejects_nonfinite():
    with pytest.raises(ValueError):
        Observation(np.array([np.nan]))
    with pytest.raises(ValueError):
        Observation(np.array([1.0]), target=float("inf"))


# ---------------------------------------------------------------------------
# Indicator families
# ---------------------------------------------------------------------------


def test_norm_ball_is_exact_indicator():
    fn = norm_ball(1.0)
    assert fn.evaluator(obs(0.5)) == 1.0
    assert fn.evaluator(obs(1.0)) == 1.0      # boundary included
    assert fn.evaluator(obs(1.0000001)) == 0.0
    assert fn.evaluator(obs(-2.0)) == 0.0
    assert fn.upper_bound == 1.0


def test_norm_shell_complements_ball_off_boundary():
    ball, shell = norm_ball(1.3), norm_shell(1.3)
    for x in (0.0, 0.5, 1.2, 1.4, 5.0):
        o = obs(x)
        inside, outside = ball.evaluator(o), shell.evaluator(o)
        assert inside in (0.0, 1.0) and outside in (0.0, 1.0)
        assert inside + outside == 1.0


def test_component_family_reads_one_coordinate():
    band = component_band(1, 0.5)
    above = component_above(1, 0.5)
    below = component_below(1, 0.5)
    o = obs(9.0, 0.2, -9.0)      # only the middle coordinate matters
    assert band.evaluator(o) == 1.0
    assert above.evaluator(o) == 0.0
    assert below.evaluator(o) == 1.0
    far = obs(0.0, 3.0, 0.0)
    assert band.evaluator(far) == 0.0
    assert above.evaluator(far) == 1.0
    assert below.evaluator(far) == 0.0


def test_band_boundary_is_strict():
    band = component_band(0, 0.5)
    assert band.evaluator(obs(0.5)) == 0.0
    assert band.evaluator(obs(-0.5)) == 0.0
    assert band.evaluator(obs(0.4999999999)) == 1.0


def test_censor_threshold_reads_target():
    fn1, fn2 = censor_threshold(1.0), censor_threshold(2.0)
    o = obs(0.0, y=1.5)
    assert fn1.evaluator(o) == 0.0
    assert fn2.evaluator(o) == 1.0
    with pytest.raises(ValueError):
        fn1.evaluator(obs(0.0))   # no target


def test_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        norm_ball(0.0)
    with pytest.raises(ValueError):
        norm_shell(-1.0)


def test_custom_bias_carries_declared_bound():
    fn = custom_bias(lambda o: 0.5, upper_bound=2.0, declared_lower=0.1)
    assert fn.kind == "custom"
    assert fn.upper_bound == 2.0
    assert fn.declared_lower == 0.1


# ---------------------------------------------------------------------------
# Config round trips
# ---------------------------------------------------------------------------


def test_config_round_trip_all_kinds():
    defs = [
        {"kind": "whole_space"},
        {"kind": "norm_ball", "r": 0.8},
        {"kind": "norm_shell", "r": 1.4},
        {"kind": "component_band", "j": 0, "c": 0.1},
        {"kind": "component_above", "j": 2, "c": 1.5},
        {"kind": "component_below", "j": 1, "c": -0.3},
        {"kind": "censor", "tau": 1.0},
    ]
    for d in defs:
        fn = biasing_from_config(d)
        assert fn.config == d


def test_config_rejects_unknown_kind():
    with pytest.raises(SchemaError):
        biasing_from_config({"kind": "banana"})


def test_config_rejects_missing_and_extra_params():
    with pytest.raises(SchemaError):
        biasing_from_config({"kind": "norm_ball"})
    with pytest.raises(SchemaError):
        biasing_from_config({"kind": "whole_space", "r": 1.0})


def test_config_rejects_bad_values():
    with pytest.raises(SchemaError):
        biasing_from_config({"kind": "norm_ball", "r": -2.0})


# ---------------------------------------------------------------------------
# Pooling and the bias matrix
# ---------------------------------------------------------------------------


def test_four_point_example_matrix(four_point_pooled):
    p = four_point_pooled
    assert p.n == 4 and p.K == 2 and p.dim == 1
    expected = np.array([[1, 1], [1, 1], [1, 1], [0, 1]], dtype=float)
    assert np.array_equal(p.bias_matrix, expected)
    assert np.array_equal(p.sizes, [2, 2])
    assert np.array_equal(p.rates, [0.5, 0.5])
    assert np.array_equal(p.sample_ids, [0, 0, 1, 1])


def test_rates_sum_to_one_exactly():
    rng = np.random.default_rng(7)
    for sizes in [(1, 2, 4), (3, 3, 3), (7, 11, 13, 17)]:
        samples = [[Observation(rng.standard_normal(2)) for _ in range(m)]
                   for m in sizes]
        funcs = tuple(whole_space() for _ in sizes)
        p = evaluate_bias_matrix(samples, funcs)
        assert p.rates.sum() == 1.0
        assert np.array_equal(p.sizes, sizes)


def test_reevaluation_is_bit_identical(four_point_pooled):
    p1 = four_point_pooled
    s0 = [Observation(np.array([0.5])), Observation(np.array([-0.5]))]
    s1 = [Observation(np.array([0.2])), Observation(np.array([3.0]))]
    p2 = evaluate_bias_matrix([s0, s1], (norm_ball(1.0), whole_space()))
    assert np.array_equal(p1.bias_matrix, p2.bias_matrix)
    assert p1.bias_matrix.tobytes() == p2.bias_matrix.tobytes()


def test_mismatched_feature_dims_rejected():
    s0 = [obs(1.0, 2.0)]
    s1 = [obs(1.0)]
    with pytest.raises(DimensionMismatch):
        evaluate_bias_matrix([s0, s1], (whole_space(), whole_space()))


def test_sample_function_count_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        evaluate_bias_matrix([[obs(1.0)]], (whole_space(), whole_space()))


def test_empty_sample_rejected():
    with pytest.raises(DimensionMismatch):
        evaluate_bias_matrix([[obs(1.0)], []], (whole_space(), whole_space()))


def test_own_weight_zero_detected():
    # a "ball" observation outside the ball cannot have been drawn there
    s0 = [obs(2.0)]
    s1 = [obs(0.1)]
    with pytest.raises(OwnWeightZero):
        evaluate_bias_matrix([s0, s1], (norm_ball(1.0), whole_space()))


def test_out_of_range_evaluator_rejected():
    bad = custom_bias(lambda o: 1.5, upper_bound=1.0)
    with pytest.raises(EvaluatorOutOfRange):
        evaluate_bias_matrix([[obs(0.0)]], (bad,))
    nonfinite = custom_bias(lambda o: float("nan"), upper_bound=1.0)
    with pytest.raises(EvaluatorOutOfRange):
        evaluate_bias_matrix([[obs(0.0)]], (nonfinite,))
    negative = custom_bias(lambda o: -0.25, upper_bound=1.0)
    with pytest.raises(EvaluatorOutOfRange):
        evaluate_bias_matrix([[obs(0.0)]], (negative,))


def test_indicator_kind_must_emit_binary_values():
    sneaky = custom_bias(lambda o: 0.5, upper_bound=1.0)
    object.__setattr__(sneaky, "kind", "indicator")
    with pytest.raises(EvaluatorOutOfRange):
        evaluate_bias_matrix([[obs(0.0)]], (sneaky,))


def test_batch_and_scalar_paths_agree():
    rng = np.random.default_rng(3)
    pts = [Observation(rng.standard_normal(3)) for _ in range(40)]
    for fn in (norm_ball(1.2), norm_shell(0.9), component_band(1, 0.4),
               component_above(2, 0.0), component_below(0, -0.5)):
        col = bias_values(pts, (fn,))[:, 0]
        scalar = np.array([fn.evaluator(o) for o in pts])
        assert np.array_equal(col, scalar)


def test_bias_values_skips_own_weight_check():
    # held-out points may fall outside every stratum
    vals = bias_values([obs(5.0)], (norm_ball(1.0), norm_shell(2.0)))
    assert np.array_equal(vals, [[0.0, 1.0]])


def test_overlap_moments_match_direct_sum():
    rng = np.random.default_rng(11)
    samples = [
        [Observation(rng.standard_normal(2)) for _ in range(6)],
        [Observation(rng.standard_normal(2) * 2) for _ in range(9)],
    ]
    p = evaluate_bias_matrix(samples, (whole_space(), whole_space()))
    w = np.full(p.n, 1.0 / p.n)
    direct = direct_overlap_moments(p.bias_matrix, w)
    fast = (p.bias_matrix * w[:, None]).T @ p.bias_matrix
    assert np.allclose(direct, fast, atol=1e-15)


# ---------------------------------------------------------------------------
# DebiasedDistribution
# ---------------------------------------------------------------------------


def test_distribution_requires_normalized_weights(four_point_pooled):
    o = four_point_pooled.observations
    with pytest.raises(ValueError):
        DebiasedDistribution(observations=o, weights=np.array([1, 1, 1, 1.0]))
    with pytest.raises(ValueError):
        DebiasedDistribution(observations=o,
                             weights=np.array([0.5, 0.5, 0.5, -0.5]))


def test_distribution_expectation_is_weighted_mean(four_point_pooled):
    w = np.array([1 / 6, 1 / 6, 1 / 6, 1 / 2])
    d = DebiasedDistribution(observations=four_point_pooled.observations,
                             weights=w)
    got = d.expectation(lambda o: float(o.features[0]))
    assert got == pytest.approx(
        (0.5 - 0.5 + 0.2) / 6 + 3.0 / 2, abs=1e-15)


def test_pooled_empirical_measure_is_uniform(four_point_pooled):
    d = pooled_empirical_measure(four_point_pooled)
    assert np.array_equal(d.weights, np.full(4, 0.25))


def test_length_mismatch_rejected(four_point_pooled):
    with pytest.raises(ValueError):
        DebiasedDistribution(observations=four_point_pooled.observations,
                             weights=np.array([0.5, 0.5]))
