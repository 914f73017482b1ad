"""Goodness of fit, plausibility checks, model choice and sensitivity profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Sequence

import numpy as np

from ..errors import ConvergenceError, DataError, SubgroupCausalError
from ..measures import Measure, effects_from_joint
from ..tables import JointDistribution, Mechanism, ObservedTable
from .fit import EmOptions, em_fit

__all__ = ["GofResult", "lrt_gof", "chi2_1_sf", "ExpertChecks", "check_expert_assumptions",
           "Selection", "select_mechanism", "SensitivityCurve", "profile_sensitivity"]


class GofResult(NamedTuple):
    loglik: float
    lr_statistic: float
    df: int
    p_value: float
    boundary: bool
    """The fitted model has a parameter on the edge of its space."""


def chi2_1_sf(x: float) -> float:
    """Upper tail of the chi-square(1) distribution, ``erfc(sqrt(x / 2))``."""
    return math.erfc(math.sqrt(max(float(x), 0.0) / 2.0))


def _lr_statistic(table: ObservedTable, joint: JointDistribution) -> float:
    """``2 sum N log(N / Nhat)`` over observed cells and missing-covariate margins."""
    n = table.total
    obs_fit, mis_fit = joint.observed_margins()
    lr = 0.0
    for counts, fitted in ((table.n_obs, obs_fit), (table.n_mis, mis_fit)):
        pos = counts > 0
        if np.any(fitted[pos] <= 0):
            return math.inf
        lr += float(np.sum(counts[pos] * np.log(counts[pos] / (n * fitted[pos]))))
    return max(2.0 * lr, 0.0)


def lrt_gof(table: ObservedTable, mechanism, options: Optional[EmOptions] = None) -> GofResult:
    """Likelihood ratio test of a mechanism against the saturated observed-data model.

    The fit is done under the randomized design, which leaves one degree of
    freedom for binary X and Y.

    Raises
    ------
    ConvergenceError
        If EM does not converge.
    """
    if table.J != 2 or table.K != 2:
        raise DataError("the goodness-of-fit test needs binary covariate and outcome")
    base = options or EmOptions()
    opts = EmOptions(base.max_iter, base.loglik_tolerance, base.start, randomized=True)
    fit = em_fit(table, mechanism, opts)
    if not fit.converged:
        raise ConvergenceError(f"EM did not converge for {fit.mechanism.value}")
    lr = _lr_statistic(table, fit.joint)
    return GofResult(fit.loglik, lr, 1, chi2_1_sf(lr), fit.on_boundary)


class ExpertChecks(NamedTuple):
    """Four plausibility inequalities evaluated at a fitted joint."""

    missing_favors_x0: bool
    """``P(X=0|T=t,M=1) >= P(X=0|T=t,M=0)`` for both arms."""
    control_risk_increases_in_x: bool
    """``P(Y=1|T=0,X=1) >= P(Y=1|T=0,X=0)``."""
    control_risk_in_range: bool
    """``0.05 <= P(Y=1|T=0,X=x) <= 0.5`` for both x."""
    treatment_not_harmful_x1: bool
    """``P(Y=1|T=1,X=1) <= P(Y=1|T=0,X=1)``."""

    def all(self) -> bool:
        return all(self)


def check_expert_assumptions(joint: JointDistribution) -> ExpertChecks:
    if joint.J != 2 or joint.K != 2:
        raise DataError("expert checks need binary covariate and outcome")
    p = joint.p
    ptxm = p.sum(axis=2)  # [t, x, m]
    ptm = ptxm.sum(axis=1)
    ptx = joint.p_tx()
    if np.any(ptm <= 0) or np.any(ptx <= 0):
        raise DataError("a conditioning event has zero probability")
    x0_given_tm = ptxm[:, 0, :] / ptm
    a5 = bool(np.all(x0_given_tm[:, 1] >= x0_given_tm[:, 0]))
    q = joint.outcome_given_tx()[..., 1]
    a6 = bool(q[0, 1] >= q[0, 0])
    a7 = bool(np.all((q[0] >= 0.05) & (q[0] <= 0.5)))
    a8 = bool(q[1, 1] <= q[0, 1])
    return ExpertChecks(a5, a6, a7, a8)


class Selection(NamedTuple):
    chosen: Mechanism
    logliks: Dict[Mechanism, float]
    """Converged candidates only; failures are listed in ``failed``."""
    failed: tuple


def select_mechanism(table: ObservedTable, candidates: Sequence = (1, 2, 3, 4),
                     options: Optional[EmOptions] = None) -> Selection:
    """Pick the candidate mechanism with the largest maximized log-likelihood.

    Defaults to the randomized design; without it M1, M2 and M4 are all
    saturated for binary X and Y and cannot be told apart. Ties go to the
    lowest mechanism index.
    """
    kinds = sorted({Mechanism.parse(c) for c in candidates}, key=lambda k: k.index)
    if not kinds:
        raise ValueError("at least one candidate is required")
    options = options or EmOptions(randomized=True)
    logliks, failed = {}, []
    for kind in kinds:
        try:
            fit = em_fit(table, kind, options)
        except SubgroupCausalError:
            failed.append(kind)
            continue
        if fit.converged:
            logliks[kind] = fit.loglik
        else:
            failed.append(kind)
    if not logliks:
        raise ConvergenceError("no candidate mechanism converged")
    best = max(logliks.values())
    chosen = next(k for k in kinds if k in logliks and logliks[k] == best)
    return Selection(chosen, logliks, tuple(failed))


@dataclass(frozen=True, eq=False)
class SensitivityCurve:
    """Subgroup log causal odds ratios profiled over the fixed ``beta_y``.

    ``log_cor[i, x]`` holds the estimate for subgroup x at ``beta_y[i]``.
    Failed points carry NaN and ``failed[i] = True``.
    """

    beta_y: np.ndarray
    log_cor: np.ndarray
    loglik: np.ndarray
    feasible: np.ndarray
    failed: np.ndarray


def profile_sensitivity(table: ObservedTable, beta_y_grid,
                        options: Optional[EmOptions] = None) -> SensitivityCurve:
    """Fit the SENS mechanism at each fixed ``beta_y`` and record the effects.

    A point is feasible when all four expert checks hold at its MLE.
    """
    if table.J != 2 or table.K != 2:
        raise DataError("sensitivity profiling needs binary covariate and outcome")
    grid = np.asarray(beta_y_grid, dtype=float).ravel()
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or np.any(~np.isfinite(grid)):
        raise ValueError("beta_y grid must be finite and strictly increasing")
    options = options or EmOptions(randomized=True)
    n = grid.size
    log_cor = np.full((n, 2), np.nan)
    loglik = np.full(n, np.nan)
    feasible = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    for i, b in enumerate(grid):
        try:
            fit = em_fit(table, Mechanism.SENS, options, sensitivity_beta_y=b)
            est = effects_from_joint(fit.joint, Measure.LOG_COR)
            checks = check_expert_assumptions(fit.joint)
        except SubgroupCausalError:
            failed[i] = True
            continue
        if not fit.converged:
            failed[i] = True
        log_cor[i] = est.ce_x
        loglik[i] = fit.loglik
        feasible[i] = checks.all()
    return SensitivityCurve(grid, log_cor, loglik, feasible, failed)
