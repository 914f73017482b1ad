import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit
from scipy.stats.contingency import odds_ratio

from subgroup_causal import (DataError, FactoredParams, JointDistribution, Mechanism, MechanismSpec,
                             ObservedTable, compose_joint, empirical_conditionals, observed_loglik,
                             population_log_or, saturated_loglik)
from subgroup_causal.simulate import simulation_mechanisms

from conftest import ICD_N_MIS, ICD_N_OBS

probs = st.floats(0.02, 0.98)


def test_fixture_matches_typed_counts(icd):
    np.testing.assert_array_equal(icd.n_obs, ICD_N_OBS)
    np.testing.assert_array_equal(icd.n_mis, ICD_N_MIS)
    assert icd.total == 1231
    np.testing.assert_array_equal(icd.arm_totals(), [489, 742])


@pytest.mark.parametrize("text, expected", [
    ("1", Mechanism.M1), ("m2", Mechanism.M2), (" M3 ", Mechanism.M3), ("4", Mechanism.M4),
    ("x", Mechanism.MX), ("sens", Mechanism.SENS), (Mechanism.M5, Mechanism.M5),
])
def test_mechanism_parse(text, expected):
    assert Mechanism.parse(text) is expected


def test_mechanism_parse_rejects_unknown():
    with pytest.raises(ValueError):
        Mechanism.parse("M9")


@pytest.mark.parametrize("n_obs, n_mis", [
    (np.zeros((2, 2)), np.zeros((2, 2))),
    (np.zeros((3, 2, 2)), np.zeros((3, 2))),
    (np.zeros((2, 2, 2)), np.zeros((2, 3))),
    (-np.ones((2, 2, 2)), np.zeros((2, 2))),
    (np.full((2, 2, 2), np.nan), np.zeros((2, 2))),
])
def test_observed_table_rejects_bad_input(n_obs, n_mis):
    with pytest.raises(DataError):
        ObservedTable(n_obs, n_mis)


def test_observed_table_is_immutable(icd):
    with pytest.raises(ValueError):
        icd.n_obs[0, 0, 0] = 1


def test_joint_rejects_unnormalized():
    with pytest.raises(DataError):
        JointDistribution(np.full((2, 2, 2, 2), 0.1))


def test_mechanism_spec_tables_must_be_below_one():
    with pytest.raises(ValueError):
        MechanismSpec("M1", table=[[0.2, 1.0], [0.3, 0.3]])
    with pytest.raises(ValueError):
        MechanismSpec("M4")
    with pytest.raises(ValueError):
        MechanismSpec("M2", table=[0.1, 0.2])


def test_mechanism_spec_broadcasts_by_kind():
    tab = np.array([[0.1, 0.2], [0.3, 0.4]])
    m1 = MechanismSpec("M1", table=tab).prob_missing(2, 2)
    m2 = MechanismSpec("M2", table=tab).prob_missing(2, 2)
    m3 = MechanismSpec("M3", table=tab).prob_missing(2, 2)
    for t in range(2):
        for x in range(2):
            for y in range(2):
                assert m1[t, x, y] == tab[t, y]
                assert m2[t, x, y] == tab[t, x]
                assert m3[t, x, y] == tab[x, y]


def test_m4_and_sensitivity_logits():
    b = np.array([-1.0, 1.4, -0.5, 0.8])
    pm = MechanismSpec("M4", coef=b).prob_missing(2, 2)
    assert pm[1, 0, 1] == pytest.approx(expit(-1.0 + 1.4 + 0.8))
    sens = MechanismSpec("SENS", coef=[0.5, 0.2, -0.3, 0.1], beta_y=1.5).prob_missing(2, 2)
    # the sensitivity model is written for P(M=0)
    assert 1 - sens[1, 1, 1] == pytest.approx(expit(0.5 + 0.2 - 0.3 + 0.1 + 1.5))


def test_simulation_m5_logit_at_all_ones():
    pm = simulation_mechanisms()["M5"].prob_missing(2, 2)
    # -1 + 1.4 - 1 - 0.5 + 0.5 + 0.3 - 0.6 - 0.2
    assert pm[1, 1, 1] == pytest.approx(expit(-1.1))
    assert pm[0, 0, 0] == pytest.approx(expit(-1.0))


@settings(max_examples=60, deadline=None)
@given(px=probs, pt=probs, q=st.lists(probs, min_size=4, max_size=4),
       m=st.lists(st.floats(0.0, 0.95), min_size=4, max_size=4))
def test_composed_joint_is_normalized_and_factorizes(px, pt, q, m):
    py = np.array(q).reshape(2, 2)
    params = FactoredParams([1 - px, px], [pt, pt], np.stack([1 - py, py], -1),
                            MechanismSpec("M2", table=np.array(m).reshape(2, 2)), randomized=True)
    joint = compose_joint(params)
    assert joint.p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(joint.outcome_given_tx()[..., 1], py, rtol=1e-10)
    np.testing.assert_allclose(joint.prob_missing()[:, :, 0], np.array(m).reshape(2, 2), atol=1e-12)
    np.testing.assert_allclose(joint.p_x(), [1 - px, px], rtol=1e-10)


def test_factored_params_randomized_check():
    py = np.full((2, 2, 2), 0.5)
    with pytest.raises(ValueError):
        FactoredParams([0.5, 0.5], [0.3, 0.6], py, MechanismSpec("M1", table=np.full((2, 2), 0.2)),
                       randomized=True)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_observed_loglik_bounded_by_saturated(seed):
    rng = np.random.default_rng(seed)
    table = ObservedTable(rng.integers(1, 50, (2, 2, 2)), rng.integers(0, 50, (2, 2)))
    joint = JointDistribution(rng.dirichlet(np.ones(16)).reshape(2, 2, 2, 2))
    assert observed_loglik(table, joint) <= saturated_loglik(table) + 1e-9


def test_saturated_loglik_attained_by_expected_table():
    rng = np.random.default_rng(3)
    joint = JointDistribution(rng.dirichlet(np.ones(16)).reshape(2, 2, 2, 2))
    table = joint.expected_table(500.0)
    assert observed_loglik(table, joint) == pytest.approx(saturated_loglik(table), abs=1e-9)


def test_loglik_minus_inf_on_zero_probability_cell(icd):
    p = np.zeros((2, 2, 2, 2))
    p[1, 0, 0, 0] = 1.0
    assert observed_loglik(icd, JointDistribution(p)) == -math.inf


def test_empirical_conditionals_sum_to_one(icd):
    c = empirical_conditionals(icd)
    np.testing.assert_allclose(c.p_obs_given_t.sum(axis=(1, 2)) + c.p_mis_given_t.sum(axis=1), 1.0)
    np.testing.assert_allclose(c.p_t, [489 / 1231, 742 / 1231])


def test_population_log_or_against_scipy(icd):
    res = population_log_or(icd)
    cells = ICD_N_OBS.sum(axis=1) + ICD_N_MIS  # [t, y]
    # rows: treated, control; columns: y=1, y=0
    ref = odds_ratio(np.array([[cells[1, 1], cells[1, 0]], [cells[0, 1], cells[0, 0]]]).astype(int),
                     kind="sample")
    assert res.estimate == pytest.approx(math.log(ref.statistic), abs=1e-12)
    assert res.estimate == pytest.approx(-0.4063, abs=1e-3)
    assert res.se == pytest.approx(0.1548, abs=5e-4)
    assert not res.degenerate


def test_population_log_or_zero_cell():
    table = ObservedTable([[[5, 0], [5, 0]], [[5, 3], [2, 1]]], [[0, 0], [0, 0]])
    res = population_log_or(table)
    assert res.degenerate and res.estimate == math.inf
