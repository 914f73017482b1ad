import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subgroup_causal import (DataError, JointDistribution, Measure, MechanismSpec,
                             ModelIncompatibleError, ObservedTable, RankDeficientError, bounds_m5,
                             check_m2_rank, check_m3_condition, check_m4_condition,
                             check_mx_condition, effects_from_joint, eval_measure,
                             identify_m3_ce_randomized, identify_m3_cor, identify_m4, identify_mx,
                             solve_m4)
from subgroup_causal.tables import _compose

from synthetic import SOLVERS, identified_draws, random_joint


def test_icd_conditions(icd):
    for t in (0, 1):
        assert check_m2_rank(icd, t).satisfied is True
    for y in (0, 1):
        assert check_m3_condition(icd, y).satisfied is True
    rep = check_m4_condition(icd)
    assert rep.satisfied is True
    assert rep.statistic < 0
    assert math.isnan(rep.test_p_value)
    # observed-arm odds ratio for x=0 is infinite because of the zero control cell
    assert rep.details["or_yt_x0_observed"] == math.inf
    assert rep.details["or_yt_missing"] == pytest.approx((23 * 382) / (136 * 95))


def test_m2_rank_deficient_when_x_independent_of_y():
    # complete cases have X independent of Y in both arms
    table = ObservedTable([[[10, 20], [30, 60]], [[20, 20], [40, 40]]], [[15, 10], [12, 9]])
    assert check_m2_rank(table, 0).satisfied is False
    with pytest.raises(RankDeficientError):
        SOLVERS["M2"](table)


def test_m3_condition_fails_when_x_independent_of_t():
    table = ObservedTable([[[10, 20], [30, 40]], [[20, 40], [60, 80]]], [[15, 10], [12, 9]])
    assert not check_m3_condition(table, 0).satisfied
    with pytest.raises(RankDeficientError):
        SOLVERS["M3"](table)


def test_incompatible_margins_raise(icd):
    with pytest.raises(ModelIncompatibleError):
        SOLVERS["M3"](icd)
    with pytest.raises(ModelIncompatibleError):
        identify_mx(icd)


def test_stratum_entirely_missing():
    table = ObservedTable([[[0, 4], [0, 3]], [[5, 4], [6, 3]]], [[7, 1], [2, 2]])
    with pytest.raises(DataError):
        SOLVERS["M1"](table)


@pytest.mark.parametrize("mechanism", ["M1", "M2", "M3", "M4"])
def test_closed_form_round_trip(mechanism):
    for joint, table in identified_draws(mechanism, 10, seed=11):
        recovered = SOLVERS[mechanism](table)
        np.testing.assert_allclose(recovered.prob_missing(), joint.prob_missing(), atol=1e-8)
        assert recovered.total_variation(joint) < 1e-8


def test_m4_recovers_coefficients():
    rng = np.random.default_rng(5)
    coef = np.array([-1.2, 0.6, -0.7, 0.9])
    joint = JointDistribution(_compose(np.array([0.4, 0.6]), np.array([0.5, 0.5]),
                                       np.stack([np.full((2, 2), 0.6), np.full((2, 2), 0.4)], -1)
                                       + rng.uniform(-0.2, 0.2, (2, 2))[..., None] * [1, -1],
                                       MechanismSpec("M4", coef=coef).prob_missing(2, 2)))
    sol = solve_m4(joint.expected_table(1.0))
    np.testing.assert_allclose(sol.coef, coef, atol=1e-8)
    assert sol.B == pytest.approx(math.exp(coef[2]))


def test_mx_round_trip():
    rng = np.random.default_rng(8)
    for _ in range(10):
        gamma = rng.uniform(0.05, 0.5, 2)
        px, pt1 = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8, 2)
        q = rng.uniform(0.1, 0.9, (2, 2))
        pm = MechanismSpec("MX", table=gamma).prob_missing(2, 2)
        joint = JointDistribution(_compose(np.array([1 - px, px]), pt1,
                                           np.stack([1 - q, q], -1), pm))
        table = joint.expected_table(1.0)
        assert check_mx_condition(table).satisfied
        assert identify_mx(table).total_variation(joint) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_m3_cor_identified_without_randomization(seed):
    rng = np.random.default_rng(seed)
    joint = random_joint(rng, "M3")
    truth = effects_from_joint(joint, Measure.LOG_COR).ce_x
    np.testing.assert_allclose(identify_m3_cor(joint.expected_table(1.0)), truth, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_m3_randomized_effects(seed):
    rng = np.random.default_rng(seed)
    joint = random_joint(rng, "M3", randomized=True)
    est = identify_m3_ce_randomized(joint.expected_table(1.0), "crd")
    q = joint.outcome_given_tx()[..., 1]
    np.testing.assert_allclose(est.p_treated, q[1], atol=1e-8)
    np.testing.assert_allclose(est.p_control, q[0], atol=1e-8)
    np.testing.assert_allclose(est.ce_x, q[1] - q[0], atol=1e-8)


def test_m3_randomized_out_of_range_on_icd(icd):
    est = identify_m3_ce_randomized(icd)
    assert np.all(np.isnan(est.ce_x))
    assert est.p_treated[0] < 0


def _enumerated_bounds(table, measure):
    """Plug-in bounds by trying every integer split of each arm's missing units."""
    lower, upper = [], []
    for x in range(table.J):
        risks = []
        for t in (0, 1):
            n0, n1 = table.n_obs[t, x]
            m0, m1 = (int(v) for v in table.n_mis[t])
            r = [(n1 + k1) / (n0 + n1 + k0 + k1)
                 for k0, k1 in itertools.product(range(m0 + 1), range(m1 + 1))
                 if n0 + n1 + k0 + k1 > 0]
            risks.append((min(r), max(r)))
        lower.append(eval_measure(measure, risks[1][0], risks[0][1]))
        upper.append(eval_measure(measure, risks[1][1], risks[0][0]))
    return np.array(lower), np.array(upper)


@pytest.mark.parametrize("measure", list(Measure))
def test_bounds_match_enumeration(icd, measure):
    res = bounds_m5(icd, measure)
    lo, hi = _enumerated_bounds(icd, measure)
    np.testing.assert_allclose(res.lower_x, lo, rtol=1e-12)
    np.testing.assert_allclose(res.upper_x, hi, rtol=1e-12)


def test_icd_bounds_values(icd):
    res = bounds_m5(icd)
    np.testing.assert_allclose(res.lower_x, [-5.1430, -5.5741], atol=1e-4)
    assert res.upper_x[0] == math.inf
    assert res.upper_x[1] == pytest.approx(3.7820, abs=1e-4)
    assert res.has_infinite


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000), measure=st.sampled_from(list(Measure)))
def test_bounds_contain_truth_for_any_mechanism(seed, measure):
    rng = np.random.default_rng(seed)
    pm = rng.uniform(0.0, 0.7, (2, 2, 2))
    q = rng.uniform(0.05, 0.95, (2, 2))
    joint = JointDistribution(_compose(rng.dirichlet([2, 2]), rng.uniform(0.2, 0.8, 2),
                                       np.stack([1 - q, q], -1), pm))
    truth = effects_from_joint(joint, measure).ce_x
    res = bounds_m5(joint.expected_table(1.0), measure)
    assert np.all(res.lower_x <= truth + 1e-12)
    assert np.all(truth <= res.upper_x + 1e-12)


def test_m4_needs_binary_table():
    table = ObservedTable(np.ones((2, 3, 2)), np.ones((2, 2)))
    with pytest.raises(DataError):
        identify_m4(table)
