"""Synthetic data, repeated-sampling studies and mask-and-recover experiments."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit

from .em import EmOptions, em_fit, select_mechanism
from .errors import ConvergenceError, DataError, SubgroupCausalError
from .gibbs import GibbsOptions, gibbs_run, posterior_summary
from .identify import bounds_m5
from .measures import Measure, effects_from_joint
from .tables import (JointDistribution, Mechanism, MechanismSpec, ObservedTable, _compose,
                     _txy_grid)

__all__ = ["DgpSpec", "simulation_dgp", "simulation_mechanisms", "mask_mechanisms",
           "generate_dataset", "generate_complete",
           "CellMetrics", "StudyResult", "replicate_study", "RmseMatrix", "mask_and_recover",
           "ESTIMATORS"]

# P(Y=1 | T=t, X=x), indexed [t, x]
SIMULATION_OUTCOME = np.array([[0.2, 0.5], [0.8, 0.3]])

ESTIMATORS = ("M1", "M2", "M3", "M4", "select", "bounds")


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process for (T, X, Y, M) with binary T.

    Parameters
    ----------
    outcome : array, shape (2, J)
        ``P(Y=1 | T=t, X=x)``; the outcome is binary.
    treatment_prob : float
        ``P(T=1)``; treatment is independent of X.
    covariate_prob : array, shape (J,) or float
        ``P(X=x)``; a float is read as ``P(X=1)`` for binary X.
    missingness : MechanismSpec
    n : int
    seed : int
    """

    outcome: np.ndarray
    treatment_prob: float
    covariate_prob: object
    missingness: MechanismSpec
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        q = np.asarray(self.outcome, dtype=float)
        if q.ndim != 2 or q.shape[0] != 2:
            raise DataError("outcome must have shape (2, J)")
        px = np.atleast_1d(np.asarray(self.covariate_prob, dtype=float))
        if px.shape == (1,):
            px = np.array([1.0 - px[0], px[0]])
        if px.shape != (q.shape[1],) or abs(px.sum() - 1) > 1e-12:
            raise DataError("covariate_prob must be a distribution over the J levels")
        for name, arr in (("outcome", q), ("covariate_prob", px),
                          ("treatment_prob", np.array([self.treatment_prob]))):
            if np.any(arr <= 0) or np.any(arr >= 1):
                raise DataError(f"{name} entries must lie in (0, 1)")
        if int(self.n) < 1:
            raise DataError("n must be at least 1")
        object.__setattr__(self, "outcome", q)
        object.__setattr__(self, "covariate_prob", px)

    @property
    def J(self) -> int:
        return self.outcome.shape[1]

    def joint(self) -> JointDistribution:
        J = self.J
        py = np.stack([1.0 - self.outcome, self.outcome], axis=-1)
        pm = self.missingness.prob_missing(J, 2)
        pt1 = np.full(J, float(self.treatment_prob))
        return JointDistribution(_compose(self.covariate_prob, pt1, py, pm))

    def with_seed(self, seed: int, n: Optional[int] = None) -> "DgpSpec":
        return DgpSpec(self.outcome, self.treatment_prob, self.covariate_prob,
                       self.missingness, self.n if n is None else n, seed)


def _m5_table():
    t, x, y = _txy_grid(2, 2)
    eta = (-1 + 1.4 * t - x - 0.5 * y + 0.5 * t * x + 0.3 * t * y - 0.6 * x * y
           - 0.2 * t * x * y)
    return expit(eta)


def simulation_mechanisms() -> Dict[str, MechanismSpec]:
    """The five missingness mechanisms of the reference simulation design."""
    return {
        "M1": MechanismSpec("M1", table=[[0.7, 0.4], [0.3, 0.3]]),  # [t, y]
        "M2": MechanismSpec("M2", table=[[0.3, 0.5], [0.6, 0.7]]),  # [t, x]
        "M3": MechanismSpec("M3", table=[[0.8, 0.5], [0.3, 0.3]]),  # [x, y]
        "M4": MechanismSpec("M4", coef=[-1.0, 1.4, -0.5, 0.8]),
        "M5": MechanismSpec("M5", table=_m5_table()),
    }


def simulation_dgp(mechanism, n: int = 1000, seed: int = 0) -> DgpSpec:
    """Reference design: T, X ~ Bernoulli(1/2) and ``P(Y=1|t,x)`` of (0.2, 0.5, 0.8, 0.3)."""
    kind = Mechanism.parse(mechanism)
    return DgpSpec(SIMULATION_OUTCOME, 0.5, 0.5, simulation_mechanisms()[kind.value], n, seed)


def mask_mechanisms() -> Dict[str, MechanismSpec]:
    """Masks used to delete a fully observed covariate in mask-and-recover runs."""
    return {
        "M1": MechanismSpec("M1", table=[[0.2, 0.3], [0.2, 0.4]]),  # [t, y]
        "M2": MechanismSpec("M2", table=[[0.2, 0.3], [0.2, 0.5]]),  # [t, x]
        "M3": MechanismSpec("M3", table=[[0.1, 0.1], [0.1, 0.6]]),  # [x, y]
        "M4": MechanismSpec("M4", coef=[-1.0, 1.0, -1.0, 1.0]),
    }


def _table_from_cells(cells: np.ndarray) -> ObservedTable:
    return ObservedTable(cells[..., 0], cells[..., 1].sum(axis=1))


def generate_dataset(spec: DgpSpec) -> ObservedTable:
    """Draw ``spec.n`` units and hide X wherever M=1."""
    joint = spec.joint()
    rng = np.random.default_rng(spec.seed)
    cells = rng.multinomial(int(spec.n), joint.p.ravel()).reshape(joint.p.shape)
    return _table_from_cells(cells.astype(float))


def generate_complete(spec: DgpSpec) -> ObservedTable:
    """Draw a fully observed table from the (T, X, Y) part of ``spec``."""
    joint = spec.joint()
    rng = np.random.default_rng(spec.seed)
    ptxy = joint.p.sum(axis=-1)
    cells = rng.multinomial(int(spec.n), ptxy.ravel()).reshape(ptxy.shape)
    return ObservedTable(cells.astype(float), np.zeros((2, joint.K)))


class CellMetrics(NamedTuple):
    """Repeated-sampling metrics for one (data-generating process, estimator) pair.

    Per-subgroup arrays have shape (J,). Posterior fields are NaN when no
    sampler ran; bound means are NaN except for the ``"bounds"`` estimator.
    """

    bias_em: np.ndarray
    mse_em: np.ndarray
    bias_posterior_median: np.ndarray
    mse_posterior_median: np.ndarray
    coverage: np.ndarray
    mean_lower: np.ndarray
    mean_upper: np.ndarray
    n_used: int
    n_failed: int
    n_boundary: int = 0
    """Used replicates whose EM fit sits on the parameter boundary."""


@dataclass(frozen=True, eq=False)
class StudyResult:
    measure: Measure
    truth: Dict[str, np.ndarray]
    cells: Dict[tuple, CellMetrics]
    seeds: tuple

    def records(self) -> List[dict]:
        """Flat rows, one per (dgp, estimator, subgroup)."""
        rows = []
        for (dgp, est), m in sorted(self.cells.items()):
            for x in range(len(self.truth[dgp])):
                rows.append({
                    "dgp": dgp, "estimator": est, "x": x,
                    "truth": float(self.truth[dgp][x]),
                    "bias_em": float(m.bias_em[x]), "mse_em": float(m.mse_em[x]),
                    "bias_posterior_median": float(m.bias_posterior_median[x]),
                    "mse_posterior_median": float(m.mse_posterior_median[x]),
                    "coverage": float(m.coverage[x]),
                    "mean_lower": float(m.mean_lower[x]), "mean_upper": float(m.mean_upper[x]),
                    "n_used": m.n_used, "n_failed": m.n_failed, "n_boundary": m.n_boundary,
                })
        return rows


def _replicate_seeds(seed: int, dgp_index: int):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(dgp_index),))
    data_ss, chain_ss = ss.spawn(2)
    return int(data_ss.generate_state(1, np.uint64)[0]), int(chain_ss.generate_state(1, np.uint64)[0])


def _one_replicate(job):
    """Fit every estimator to one synthetic data set.

    Returns ``{estimator: dict or None}``; None marks an excluded replicate.
    """
    (dgp_index, dgp, seed, estimators, measure, posterior, gibbs_options,
     em_options, exclude_boundary) = job
    data_seed, chain_seed = _replicate_seeds(seed, dgp_index)
    table = generate_dataset(dgp.with_seed(data_seed))
    out = {}
    for est in estimators:
        try:
            if est == "bounds":
                b = bounds_m5(table, measure)
                out[est] = {"lower": np.asarray(b.lower_x, float), "upper": np.asarray(b.upper_x, float)}
                continue
            kind = select_mechanism(table, (1, 2, 3, 4), em_options).chosen if est == "select" \
                else Mechanism.parse(est)
            fit = em_fit(table, kind, em_options)
            if not fit.converged or (exclude_boundary and fit.on_boundary):
                out[est] = None
                continue
            ce = effects_from_joint(fit.joint, measure).ce_x
            if not np.all(np.isfinite(ce)):
                out[est] = None
                continue
            rec = {"em": ce, "boundary": fit.on_boundary}
            if posterior:
                opts = GibbsOptions(gibbs_options.iterations, gibbs_options.burnin, chain_seed,
                                    gibbs_options.prior, gibbs_options.mh_proposal_scale,
                                    gibbs_options.adapt, gibbs_options.randomized)
                draws = gibbs_run(table, kind, opts)
                ce_draws = draws.effects(measure)
                summ = [posterior_summary(ce_draws[:, x]) for x in range(ce_draws.shape[1])]
                med = np.array([s.median for s in summ])
                lo = np.array([s.lower for s in summ])
                hi = np.array([s.upper for s in summ])
                if not np.all(np.isfinite(np.concatenate([med, lo, hi]))):
                    out[est] = None
                    continue
                rec.update(median=med, lower=lo, upper=hi)
            out[est] = rec
        except SubgroupCausalError:
            out[est] = None
    return dgp_index, seed, out


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def _bias_mse(errors: List[np.ndarray], J: int):
    bias, mse = np.full(J, np.nan), np.full(J, np.nan)
    if errors:
        for x in range(J):
            e = [float(err[x]) for err in errors]
            bias[x] = _mean(e)
            # MSE = bias^2 + variance keeps MSE >= bias^2 exact in floating point
            mse[x] = bias[x] ** 2 + _mean((v - bias[x]) ** 2 for v in e)
    return bias, mse


def replicate_study(dgps: Mapping[str, DgpSpec], estimators: Sequence[str] = ("M1", "M2", "M3", "M4"),
                    n: int = 1000, replicates: int = 200, seeds: Optional[Sequence[int]] = None,
                    gibbs_options: Optional[GibbsOptions] = None, measure=Measure.LOG_COR,
                    posterior: bool = True, em_options: Optional[EmOptions] = None,
                    exclude_boundary: bool = False, workers: int = 1) -> StudyResult:
    """Repeated-sampling bias, MSE and interval coverage.

    Parameters
    ----------
    dgps : mapping of name to DgpSpec
        The ``n`` and ``seed`` fields of each spec are overridden.
    estimators : sequence of str
        Any of ``"M1"``-``"M4"`` (EM and, with ``posterior``, Gibbs under that
        mechanism), ``"select"`` (mechanism chosen by likelihood) and
        ``"bounds"`` (sharp bounds without a mechanism assumption).
    seeds : sequence of int, optional
        One seed per replicate; defaults to ``range(replicates)``. Each seed
        fixes both the data set and the chain, so results do not depend on
        the order of the seeds.
    exclude_boundary : bool
        Drop replicates whose EM fit lands on the parameter boundary. Off by
        default: misspecified mechanisms often fit on the boundary, and
        dropping them would empty those cells. Boundary fits are counted.
    workers : int
        Process pool size; 1 runs serially.

    Raises
    ------
    ConvergenceError
        If every replicate of some (dgp, estimator) cell failed.
    """
    measure = Measure.parse(measure)
    for est in estimators:
        if est not in ESTIMATORS and Mechanism.parse(est) not in (Mechanism.M1, Mechanism.M2,
                                                                   Mechanism.M3, Mechanism.M4):
            raise ValueError(f"unknown estimator {est!r}")
    estimators = tuple("bounds" if e == "bounds" else "select" if e == "select"
                       else Mechanism.parse(e).value for e in estimators)
    seeds = tuple(range(replicates)) if seeds is None else tuple(int(s) for s in seeds)
    if len(set(seeds)) != len(seeds):
        raise ValueError("replicate seeds must be distinct")
    gibbs_options = gibbs_options or GibbsOptions()
    em_options = em_options or EmOptions(randomized=True)
    names = list(dgps)
    specs = [dgps[k].with_seed(0, n) for k in names]
    jobs = [(i, specs[i], s, estimators, measure, posterior, gibbs_options, em_options,
             exclude_boundary) for i in range(len(names)) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_replicate, jobs, chunksize=8))
    else:
        results = [_one_replicate(job) for job in jobs]
    results.sort(key=lambda r: (r[0], r[1]))

    truth = {name: np.asarray(effects_from_joint(spec.joint(), measure).ce_x)
             for name, spec in zip(names, specs)}
    cells = {}
    for i, name in enumerate(names):
        J = specs[i].J
        for est in estimators:
            recs = [out[est] for idx, _, out in results if idx == i]
            used = [r for r in recs if r is not None]
            failed = len(recs) - len(used)
            if not used:
                raise ConvergenceError(f"every replicate failed for ({name}, {est})")
            nan = np.full(J, np.nan)
            if est == "bounds":
                lower = np.array([_mean(r["lower"][x] for r in used) for x in range(J)])
                upper = np.array([_mean(r["upper"][x] for r in used) for x in range(J)])
                cells[(name, est)] = CellMetrics(nan, nan, nan, nan, nan, lower, upper,
                                                 len(used), failed, 0)
                continue
            b_em, m_em = _bias_mse([r["em"] - truth[name] for r in used], J)
            if posterior:
                b_pm, m_pm = _bias_mse([r["median"] - truth[name] for r in used], J)
                cov = np.array([_mean(float(r["lower"][x] <= truth[name][x] <= r["upper"][x])
                                      for r in used) for x in range(J)])
            else:
                b_pm, m_pm, cov = nan, nan, nan
            n_boundary = sum(bool(r["boundary"]) for r in used)
            cells[(name, est)] = CellMetrics(b_em, m_em, b_pm, m_pm, cov, nan, nan,
                                             len(used), failed, n_boundary)
    return StudyResult(measure, truth, cells, seeds)


class RmseMatrix(NamedTuple):
    """RMSE of recovered ``P(Y=1|t,x)``; rows are masks, columns estimators.

    Failed fits are NaN.
    """

    masks: tuple
    estimators: tuple
    rmse: np.ndarray
    reference: np.ndarray
    mask_rates: np.ndarray

    def diagonal_is_row_min(self) -> np.ndarray:
        """For rows whose mask name is also an estimator: is that entry the row minimum?"""
        out = []
        for i, m in enumerate(self.masks):
            if m not in self.estimators:
                continue
            row = self.rmse[i]
            j = self.estimators.index(m)
            out.append(bool(np.isfinite(row[j]) and row[j] <= np.nanmin(row)))
        return np.array(out)


def mask_and_recover(complete: ObservedTable, masks: Optional[Mapping[str, MechanismSpec]] = None,
                     estimators: Sequence = ("M1", "M2", "M3", "M4"), seed: int = 0,
                     em_options: Optional[EmOptions] = None) -> RmseMatrix:
    """Hide X under known masks, refit, and compare with the complete-data MLE.

    Parameters
    ----------
    complete : ObservedTable
        Binary-outcome table without missing rows.
    masks : mapping of name to MechanismSpec, optional
        Defaults to :func:`mask_mechanisms`.
    estimators : sequence
        Mechanisms refit by EM.
    seed : int
    em_options : EmOptions, optional
        Defaults to an unconstrained treatment model.
    """
    if complete.has_missing():
        raise DataError("mask_and_recover needs a table without missing rows")
    if not complete.is_integral():
        raise DataError("mask_and_recover needs integer counts")
    if complete.K != 2:
        raise DataError("mask_and_recover needs a binary outcome")
    masks = dict(mask_mechanisms() if masks is None else masks)
    est = tuple(Mechanism.parse(e).value for e in estimators)
    em_options = em_options or EmOptions()
    n = np.asarray(complete.n_obs, dtype=np.int64)
    ntx = n.sum(axis=2)
    if np.any(ntx == 0):
        raise DataError("every (t, x) cell must be populated")
    reference = n[..., 1] / ntx
    names = tuple(masks)
    rmse = np.full((len(names), len(est)), np.nan)
    rates = np.full(len(names), np.nan)
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    for i, name in enumerate(names):
        pm = masks[name].prob_missing(complete.J, complete.K)
        hidden = np.random.default_rng(children[i]).binomial(n, pm)
        rates[i] = hidden.sum() / n.sum()
        table = ObservedTable((n - hidden).astype(float), hidden.sum(axis=1).astype(float))
        for j, kind in enumerate(est):
            try:
                fit = em_fit(table, kind, em_options)
            except SubgroupCausalError:
                continue
            if not fit.converged:
                continue
            q = fit.joint.outcome_given_tx()[..., 1]
            rmse[i, j] = math.sqrt(math.fsum(((q - reference) ** 2).ravel()) / q.size)
    return RmseMatrix(names, est, rmse, reference, rates)
