import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from subgroup_causal import (DataError, JointDistribution, Measure, crr, effects_from_joint,
                             eval_measure)
from subgroup_causal.simulate import SIMULATION_OUTCOME, simulation_dgp

unit = st.floats(0.001, 0.999)


@pytest.mark.parametrize("alias, measure", [
    ("crd", Measure.CRD), ("crr", Measure.LOG_CRR), ("cor", Measure.LOG_COR),
    ("LOG_COR", Measure.LOG_COR), ("logcrr", Measure.LOG_CRR),
])
def test_measure_aliases(alias, measure):
    assert Measure.parse(alias) is measure


def test_measure_values():
    assert eval_measure("crd", 0.8, 0.2) == pytest.approx(0.6)
    assert eval_measure("crr", 0.8, 0.2) == pytest.approx(math.log(4))
    assert eval_measure("cor", 0.8, 0.2) == pytest.approx(math.log(16))
    assert crr(0.3, 0.6) == pytest.approx(0.5)


def test_measure_extended_reals():
    assert eval_measure("cor", 1.0, 0.5) == math.inf
    assert eval_measure("cor", 0.0, 0.5) == -math.inf
    assert eval_measure("crr", 0.5, 0.0) == math.inf
    assert math.isnan(eval_measure("crr", 0.0, 0.0))


@given(p1=unit, p0=unit)
def test_measures_agree_in_sign(p1, p0):
    signs = {np.sign(round(float(eval_measure(m, p1, p0)), 12)) for m in Measure}
    assert len(signs) == 1


@given(p1=unit, p0=unit)
def test_measures_antisymmetric(p1, p0):
    for m in Measure:
        assert eval_measure(m, p1, p0) == pytest.approx(-eval_measure(m, p0, p1), abs=1e-12)


def test_effects_from_simulation_joint():
    joint = simulation_dgp("M1").joint()
    est = effects_from_joint(joint, "cor")
    q = SIMULATION_OUTCOME
    expected = [math.log(q[1, x] / (1 - q[1, x]) / (q[0, x] / (1 - q[0, x]))) for x in range(2)]
    np.testing.assert_allclose(est.ce_x, expected, rtol=1e-12)
    np.testing.assert_allclose(est.p_treated, q[1])
    np.testing.assert_allclose(est.p_control, q[0])
    # X ~ Bernoulli(1/2) independent of T: both population contrasts coincide
    r = q.mean(axis=1)
    total = math.log(r[1] / (1 - r[1]) / (r[0] / (1 - r[0])))
    assert est.ce_total == pytest.approx(total)
    assert effects_from_joint(joint, "cor", assume="randomized").ce_total == pytest.approx(total)


def test_effects_need_positive_tx_cells():
    p = np.zeros((2, 2, 2, 2))
    p[:, 0, :, 0] = 0.25
    with pytest.raises(DataError):
        effects_from_joint(JointDistribution(p))


def test_effects_reject_unknown_assumption():
    with pytest.raises(ValueError):
        effects_from_joint(simulation_dgp("M1").joint(), assume="none")
