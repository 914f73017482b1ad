import numpy as np
import pytest
from scipy import stats

from subgroup_causal import DataError, GibbsOptions, MechanismSpec, ObservedTable
from subgroup_causal.simulate import (DgpSpec, generate_complete, generate_dataset,
                                      mask_and_recover, mask_mechanisms, replicate_study,
                                      simulation_dgp, simulation_mechanisms)

QUICK_GIBBS = GibbsOptions(iterations=1200, burnin=400)


def test_dgp_validation():
    spec = MechanismSpec("M1", table=np.full((2, 2), 0.2))
    with pytest.raises(DataError):
        DgpSpec(np.full((3, 2), 0.5), 0.5, 0.5, spec)
    with pytest.raises(DataError):
        DgpSpec(np.full((2, 2), 0.5), 1.0, 0.5, spec)
    with pytest.raises(DataError):
        DgpSpec(np.full((2, 2), 0.5), 0.5, [0.3, 0.3], spec)
    with pytest.raises(DataError):
        DgpSpec(np.full((2, 2), 0.5), 0.5, 0.5, spec, n=0)


def test_simulation_design_margins():
    for name in ("M1", "M2", "M3", "M4", "M5"):
        joint = simulation_dgp(name).joint()
        np.testing.assert_allclose(joint.p_tx(), 0.25)
        np.testing.assert_allclose(joint.outcome_given_tx()[..., 1], [[0.2, 0.5], [0.8, 0.3]])
    assert set(simulation_mechanisms()) == {"M1", "M2", "M3", "M4", "M5"}


def test_generated_frequencies_match_joint():
    dgp = simulation_dgp("M4", n=1_000_000, seed=99)
    table = generate_dataset(dgp)
    obs, mis = dgp.joint().observed_margins()
    counts = np.concatenate([table.n_obs.ravel(), table.n_mis.ravel()])
    expected = 1_000_000 * np.concatenate([obs.ravel(), mis.ravel()])
    assert counts.sum() == 1_000_000
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_generation_is_seeded():
    a = generate_dataset(simulation_dgp("M2", seed=5))
    b = generate_dataset(simulation_dgp("M2", seed=5))
    c = generate_dataset(simulation_dgp("M2", seed=6))
    assert a == b and not a == c
    complete = generate_complete(simulation_dgp("M2", n=500, seed=5))
    assert not complete.has_missing() and complete.total == 500


def test_study_metrics_are_consistent():
    dgps = {"M1": simulation_dgp("M1"), "M2": simulation_dgp("M2")}
    res = replicate_study(dgps, ("M1", "M2", "bounds"), n=500, replicates=8,
                          gibbs_options=QUICK_GIBBS)
    assert set(res.cells) == {(d, e) for d in dgps for e in ("M1", "M2", "bounds")}
    for (dgp, est), m in res.cells.items():
        assert m.n_used + m.n_failed == 8
        if est == "bounds":
            assert np.all(m.mean_lower <= res.truth[dgp]) and np.all(res.truth[dgp] <= m.mean_upper)
            continue
        assert np.all(m.mse_em >= m.bias_em ** 2)
        assert np.all(m.mse_posterior_median >= m.bias_posterior_median ** 2)
        assert np.all((m.coverage >= 0) & (m.coverage <= 1))
    rows = res.records()
    assert len(rows) == 2 * 3 * 2
    assert {"dgp", "estimator", "x", "truth", "bias_em", "coverage"} <= set(rows[0])


def test_study_independent_of_seed_order():
    dgps = {"M3": simulation_dgp("M3")}
    a = replicate_study(dgps, ("M3",), n=400, seeds=[3, 1, 2], posterior=False)
    b = replicate_study(dgps, ("M3",), n=400, seeds=[1, 2, 3], posterior=False)
    np.testing.assert_array_equal(a.cells[("M3", "M3")].bias_em, b.cells[("M3", "M3")].bias_em)


def test_study_rejects_bad_arguments():
    dgps = {"M1": simulation_dgp("M1")}
    with pytest.raises(ValueError):
        replicate_study(dgps, ("M7",), replicates=2, posterior=False)
    with pytest.raises(ValueError):
        replicate_study(dgps, ("M1",), seeds=[1, 1], posterior=False)


def test_select_estimator_runs():
    res = replicate_study({"M2": simulation_dgp("M2")}, ("select",), n=800, replicates=4,
                          posterior=False)
    assert res.cells[("M2", "select")].n_used == 4


def test_mask_and_recover_shapes():
    complete = generate_complete(simulation_dgp("M1", n=2000, seed=1))
    res = mask_and_recover(complete, seed=1)
    assert res.rmse.shape == (4, 4)
    assert res.masks == tuple(mask_mechanisms())
    assert np.all((res.mask_rates > 0.05) & (res.mask_rates < 0.6))
    assert res.diagonal_is_row_min().shape == (4,)
    np.testing.assert_allclose(res.reference, complete.n_obs[..., 1] / complete.n_obs.sum(axis=2))


def test_mask_and_recover_input_checks(icd):
    with pytest.raises(DataError):
        mask_and_recover(icd)
    with pytest.raises(DataError):
        mask_and_recover(ObservedTable(np.full((2, 2, 2), 2.5), np.zeros((2, 2))))
