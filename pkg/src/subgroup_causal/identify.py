"""Closed-form identification of the joint from observable margins.

Every solver works on the within-arm proportions ``p_{xy0|t}`` and
``p_{+y1|t}`` and rebuilds ``p[t, x, y, m]`` from the missingness odds it
recovers. Condition checkers report the determinant (or rank statistic)
behind each identifiability condition together with a chi-square test of
the corresponding independence on the complete cases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import DataError, ModelIncompatibleError, RankDeficientError
from .measures import CausalEstimate, Measure, eval_measure
from .tables import JointDistribution, ObservedTable, empirical_conditionals

__all__ = [
    "ConditionReport",
    "BoundsResult",
    "M4Solution",
    "check_m2_rank",
    "check_m3_condition",
    "check_mx_condition",
    "check_m4_condition",
    "identify_m1",
    "solve_m2_odds",
    "identify_m2",
    "identify_m3_cor",
    "solve_m3_odds",
    "identify_m3_joint",
    "identify_m3_ce_randomized",
    "solve_m4",
    "identify_m4",
    "solve_mx_odds",
    "identify_mx",
    "bounds_m5",
]

RANK_TOL = 1e-8
# Negative odds smaller than this are treated as round-off zeros.
ODDS_ROUNDOFF = 1e-10


@dataclass(frozen=True)
class ConditionReport:
    """Verdict on one identifiability condition.

    ``satisfied`` compares ``statistic`` with ``tolerance``: for rank
    conditions it requires ``|statistic| > tolerance``; for the M4 condition
    it requires ``statistic <= tolerance``.
    """

    name: str
    satisfied: bool
    statistic: float
    test_p_value: float
    tolerance: float
    details: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class BoundsResult:
    measure: Measure
    lower_x: np.ndarray
    upper_x: np.ndarray

    @property
    def has_infinite(self) -> bool:
        return bool(np.any(np.isinf(self.lower_x)) or np.any(np.isinf(self.upper_x)))


def _independence_p_value(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    if np.any(counts.sum(axis=0) <= 0) or np.any(counts.sum(axis=1) <= 0):
        return math.nan
    return float(stats.chi2_contingency(counts, correction=False).pvalue)


def _rank_statistic(mat: np.ndarray, rank: int):
    """Determinant for 2x2 systems, singular-value ratio otherwise.

    Returns ``(statistic, tolerance)``; the system has full rank ``rank``
    iff ``|statistic| > tolerance``.
    """
    sv = np.linalg.svd(mat, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    if mat.shape == (2, 2) and rank == 2:
        return float(np.linalg.det(mat)), float(RANK_TOL * smax ** 2)
    if min(mat.shape) < rank or smax == 0:
        return 0.0, RANK_TOL
    return float(sv[rank - 1] / smax), RANK_TOL


def check_m2_rank(table: ObservedTable, t: int) -> ConditionReport:
    """Rank J of ``[P(X=x, Y=y | T=t, M=0)]`` (X dependent on Y within arm t)."""
    counts = table.n_obs[t]
    if counts.sum() <= 0:
        raise DataError(f"arm t={t} has no complete cases")
    theta = counts / counts.sum()
    stat, tol = _rank_statistic(theta, table.J)
    return ConditionReport(f"M2 rank (t={t})", bool(abs(stat) > tol), stat,
                           _independence_p_value(counts), tol)


def check_m3_condition(table: ObservedTable, y: int) -> ConditionReport:
    """X dependent on T within ``(Y=y, M=0)``: rank of ``[p_{xy0|t}]`` over (t, x)."""
    if np.any(table.n_obs[:, :, y].sum(axis=1) <= 0):
        raise DataError(f"stratum y={y} has an arm without complete cases")
    cond = empirical_conditionals(table)
    mat = cond.p_obs_given_t[:, :, y]
    stat, tol = _rank_statistic(mat, table.J)
    return ConditionReport(f"M3 condition (y={y})", bool(abs(stat) > tol), stat,
                           _independence_p_value(table.n_obs[:, :, y]), tol)


def _mx_system(table: ObservedTable):
    cond = empirical_conditionals(table)
    # rows (t, y): sum_x gamma_x p_{xy0|t} = p_{+y1|t}
    A = np.transpose(cond.p_obs_given_t, (0, 2, 1)).reshape(-1, table.J)
    b = cond.p_mis_given_t.reshape(-1)
    return A, b


def check_mx_condition(table: ObservedTable) -> ConditionReport:
    """Stacked rank condition for M independent of (T, Y) given X."""
    A, _ = _mx_system(table)
    stat, tol = _rank_statistic(A, table.J)
    counts = table.n_obs.reshape(2, table.J, table.K).transpose(1, 0, 2).reshape(table.J, -1)
    return ConditionReport("MX stacked rank", bool(abs(stat) > tol), stat,
                           _independence_p_value(counts), tol)


def _require_binary(table: ObservedTable, what: str, J=True, K=True):
    if (J and table.J != 2) or (K and table.K != 2):
        raise DataError(f"{what} requires binary X and Y (got J={table.J}, K={table.K})")


class _M4Coefficients(NamedTuple):
    E: float
    F: float
    G: float
    scale: float


def _m4_coefficients(table: ObservedTable) -> _M4Coefficients:
    c = empirical_conditionals(table)
    p = c.p_obs_given_t  # p[t, x, y] = p_{xy0|t}
    q = c.p_mis_given_t  # q[t, y] = p_{+y1|t}
    if np.any(q <= 0):
        raise DataError("M4 identification needs every p_{+y1|t} > 0")
    u = q[0, 1] * q[1, 0]  # p_{+11|0} p_{+01|1}
    v = q[0, 0] * q[1, 1]  # p_{+01|0} p_{+11|1}
    E = p[0, 1, 1] * p[1, 1, 0] / u - p[0, 1, 0] * p[1, 1, 1] / v
    F = ((p[0, 1, 1] * p[1, 0, 0] + p[0, 0, 1] * p[1, 1, 0]) / u
         - (p[0, 1, 0] * p[1, 0, 1] + p[0, 0, 0] * p[1, 1, 1]) / v)
    G = p[0, 0, 1] * p[1, 0, 0] / u - p[0, 0, 0] * p[1, 0, 1] / v
    scale = max(abs(E), abs(F), abs(G))
    return _M4Coefficients(float(E), float(F), float(G), float(scale))


def _odds_ratio(n11, n00, n10, n01):
    """(n11 n00) / (n10 n01) on extended reals; NaN when 0/0."""
    num, den = n11 * n00, n10 * n01
    if den == 0:
        return math.inf if num > 0 else math.nan
    return num / den


def check_m4_condition(table: ObservedTable) -> ConditionReport:
    """Whether ``OR_{YT|M=1}`` lies between the two ``OR_{YT|X=x,M=0}``.

    Evaluated through the sign of ``E * G`` of the quadratic in
    ``B = exp(beta_X)``; the condition holds iff ``E * G <= 0``.
    """
    _require_binary(table, "M4 condition")
    n, m = table.n_obs, table.n_mis
    or_mis = _odds_ratio(m[1, 1], m[0, 0], m[1, 0], m[0, 1])
    or_x = [_odds_ratio(n[1, x, 1], n[0, x, 0], n[1, x, 0], n[0, x, 1]) for x in range(2)]
    if all(math.isnan(v) for v in [or_mis, *or_x]):
        raise DataError("all three odds ratios are undefined")
    co = _m4_coefficients(table)
    stat = co.E * co.G
    tol = 1e-12 * co.scale ** 2
    details = {"or_yt_missing": or_mis, "or_yt_x0_observed": or_x[0],
               "or_yt_x1_observed": or_x[1], "E": co.E, "F": co.F, "G": co.G}
    # No single independence test corresponds to the ordering; p-value is NaN.
    return ConditionReport("M4 odds-ratio ordering", bool(stat <= tol), stat, math.nan, tol, details)


def _joint_from_odds(cond, odds_tx_y: np.ndarray) -> np.ndarray:
    """Rebuild p[t,x,y,m] from p_{xy0|t}, P(T) and missingness odds.

    ``P(X, Y | T)`` is renormalized within each arm, which is a no-op when
    the odds solve the moment equations exactly.
    """
    odds_tx_y = np.broadcast_to(odds_tx_y, cond.p_obs_given_t.shape)
    pxy_t = cond.p_obs_given_t * (1.0 + odds_tx_y)  # P(X,Y | T)
    pxy_t = pxy_t / pxy_t.sum(axis=(1, 2), keepdims=True)
    pm = odds_tx_y / (1.0 + odds_tx_y)
    base = cond.p_t[:, None, None] * pxy_t
    return np.stack([base * (1.0 - pm), base * pm], axis=-1)


def _check_odds(odds: np.ndarray, name: str) -> np.ndarray:
    odds = np.array(odds, dtype=float)
    if np.any(odds < -ODDS_ROUNDOFF):
        raise ModelIncompatibleError(
            f"negative {name} solution {np.round(odds, 6).tolist()}: "
            "the mechanism is incompatible with the observed margins")
    odds[odds < 0] = 0.0
    return odds


def identify_m1(table: ObservedTable) -> JointDistribution:
    """Joint under missingness depending on (T, Y) only."""
    cond = empirical_conditionals(table)
    obs_ty = table.n_obs.sum(axis=1)
    if np.any((obs_ty <= 0) & (table.n_mis > 0)):
        raise DataError("a (t, y) stratum is entirely missing; P(M=0|t,y) is zero")
    with np.errstate(invalid="ignore", divide="ignore"):
        odds = np.where(obs_ty > 0, table.n_mis / obs_ty, 0.0)  # [t, y]
    return JointDistribution(_joint_from_odds(cond, odds[:, None, :]))


def solve_m2_odds(table: ObservedTable) -> np.ndarray:
    """``xi[t, x] = P(M=1|t,x) / P(M=0|t,x)`` from ``Theta_t xi_t = p_{+.1|t}``."""
    cond = empirical_conditionals(table)
    if table.J > table.K:
        raise RankDeficientError("M2 joint needs J <= K")
    xi = np.empty((2, table.J))
    for t in (0, 1):
        rep = check_m2_rank(table, t)
        if not rep.satisfied:
            raise RankDeficientError(f"rank condition fails in arm t={t}")
        A = cond.p_obs_given_t[t].T  # (K, J)
        xi[t] = np.linalg.lstsq(A, cond.p_mis_given_t[t], rcond=None)[0]
    return _check_odds(xi, "xi")


def identify_m2(table: ObservedTable) -> JointDistribution:
    """Joint under missingness depending on (T, X) only."""
    xi = solve_m2_odds(table)
    cond = empirical_conditionals(table)
    return JointDistribution(_joint_from_odds(cond, xi[:, :, None]))


def identify_m3_cor(table: ObservedTable) -> np.ndarray:
    """``log COR_x`` per stratum, identified under M independent of T given (X, Y).

    Zero cells give +-inf (or NaN for 0/0).
    """
    _require_binary(table, "log COR identification", J=False)
    n = table.n_obs
    arms = table.arm_totals()
    p = n / arms[:, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (np.log(p[1, :, 1]) + np.log(p[0, :, 0])
               - np.log(p[0, :, 1]) - np.log(p[1, :, 0]))
    return out


def solve_m3_odds(table: ObservedTable) -> np.ndarray:
    """``kappa[x, y] = P(M=1|x,y) / P(M=0|x,y)`` from the per-y 2x2 systems."""
    _require_binary(table, "M3 joint identification", K=False)
    cond = empirical_conditionals(table)
    kappa = np.empty((2, table.K))
    for y in range(table.K):
        if not check_m3_condition(table, y).satisfied:
            raise RankDeficientError(f"X is independent of T within (Y={y}, M=0)")
        A = cond.p_obs_given_t[:, :, y]  # rows t, cols x
        kappa[:, y] = np.linalg.solve(A, cond.p_mis_given_t[:, y])
    return _check_odds(kappa, "kappa")


def identify_m3_joint(table: ObservedTable) -> JointDistribution:
    """Joint under missingness depending on (X, Y) only (binary X)."""
    kappa = solve_m3_odds(table)
    cond = empirical_conditionals(table)
    return JointDistribution(_joint_from_odds(cond, kappa[None, :, :]))


def identify_m3_ce_randomized(table: ObservedTable, measure=Measure.LOG_COR) -> CausalEstimate:
    """Subgroup effects under M independent of T given (X, Y) and T independent of X.

    Solves, per x, the linear system for ``P(Y=1|T=1,X=x)`` and
    ``P(Y=1|T=0,X=x)``. A singular system implies Y independent of T given
    X, so CE_x = 0 and the risks are reported as NaN. Solved risks outside
    [0, 1] mean the table is incompatible with the model; they are returned
    as solved and the ratio measures then evaluate to NaN.
    """
    _require_binary(table, "randomized M3 effects", J=False)
    measure = Measure.parse(measure)
    cond = empirical_conditionals(table)
    p = cond.p_obs_given_t
    ce = np.empty(table.J)
    p1 = np.full(table.J, math.nan)
    p0 = np.full(table.J, math.nan)
    for x in range(table.J):
        A = np.array([[p[0, x, 1], p[1, x, 1]],
                      [p[0, x, 0], p[1, x, 0]]])
        b = np.array([0.0, p[0, x, 0] - p[1, x, 0]])
        stat, tol = _rank_statistic(A, 2)
        if abs(stat) <= tol:
            ce[x] = 0.0
            continue
        sol = np.linalg.solve(A, b)
        p1[x], p0[x] = sol[0], -sol[1]
        ce[x] = eval_measure(measure, p1[x], p0[x])
    risk = (table.n_obs.sum(axis=1)[:, 1] + table.n_mis[:, 1]) / table.arm_totals()
    total = float(eval_measure(measure, risk[1], risk[0]))
    return CausalEstimate(measure, ce, total, "M3 closed form (randomized)", p1, p0)


class M4Solution(NamedTuple):
    coef: np.ndarray
    """(b0, bT, bX, bY) of ``logit P(M=1|t,x,y)``."""
    B: float
    E: float
    F: float
    G: float


def _positive_root(E, F, G, scale):
    if abs(E) < 1e-12 * max(abs(F), abs(G)) or E == 0:
        if F == 0:
            raise ModelIncompatibleError("degenerate M4 equation (E = F = 0)")
        roots = [-G / F]
    else:
        disc = F * F - 4 * E * G
        if disc < 0:
            raise ModelIncompatibleError("M4 quadratic has no real root")
        sq = math.sqrt(disc)
        qq = -0.5 * (F + math.copysign(sq, F))
        roots = [qq / E, G / qq] if qq != 0 else [0.0]
    pos = [r for r in roots if r > 0]
    if not pos:
        raise ModelIncompatibleError("M4 quadratic has no positive root")
    if len(pos) == 2 and abs(pos[0] - pos[1]) > 1e-12 * max(pos):
        raise ModelIncompatibleError(
            "M4 quadratic has two positive roots; the odds-ratio condition fails")
    return pos[0]


def solve_m4(table: ObservedTable) -> M4Solution:
    """Logistic missingness coefficients from the M4 moment equations."""
    _require_binary(table, "M4 identification")
    co = _m4_coefficients(table)
    B = _positive_root(co.E, co.F, co.G, co.scale)
    c = empirical_conditionals(table)
    p, q = c.p_obs_given_t, c.p_mis_given_t
    A = q[0, 0] / (p[0, 0, 0] + p[0, 1, 0] * B)
    C = q[1, 0] / (p[1, 0, 0] + p[1, 1, 0] * B)
    D = q[0, 1] / (p[0, 0, 1] + p[0, 1, 1] * B)
    with np.errstate(divide="ignore"):
        b0, bx = np.log(A), np.log(B)
        coef = np.array([b0, np.log(C) - b0, bx, np.log(D) - b0])
    return M4Solution(coef, float(B), co.E, co.F, co.G)


def identify_m4(table: ObservedTable) -> JointDistribution:
    """Joint under the additive-logit missingness model."""
    sol = solve_m4(table)
    cond = empirical_conditionals(table)
    t, x, y = np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij")
    b = sol.coef
    odds = np.exp(b[0] + b[1] * t + b[2] * x + b[3] * y)
    return JointDistribution(_joint_from_odds(cond, odds))


class MxSolution(NamedTuple):
    gamma: np.ndarray
    residual_norm: float


def solve_mx_odds(table: ObservedTable) -> MxSolution:
    """Least-squares ``gamma_x = P(M=1|x)/P(M=0|x)`` over all (t, y) equations."""
    rep = check_mx_condition(table)
    if not rep.satisfied:
        raise RankDeficientError("X is independent of (T, Y) among complete cases")
    A, b = _mx_system(table)
    gamma = np.linalg.lstsq(A, b, rcond=None)[0]
    resid = float(np.linalg.norm(A @ gamma - b))
    return MxSolution(_check_odds(gamma, "gamma"), resid)


def identify_mx(table: ObservedTable) -> JointDistribution:
    """Joint under missingness depending on X only.

    With a nonzero least-squares residual the rebuilt ``P(X, Y | T)`` is
    renormalized within each arm.
    """
    sol = solve_mx_odds(table)
    cond = empirical_conditionals(table)
    return JointDistribution(_joint_from_odds(cond, sol.gamma[None, :, None]))


def bounds_m5(table: ObservedTable, measure=Measure.LOG_COR) -> BoundsResult:
    """Sharp bounds on CE_x with unrestricted missingness, plug-in estimates.

    The treated risk is smallest when every missing ``Y=0`` treated unit has
    ``X=x`` and no missing ``Y=1`` one does; the control risk is largest in
    the mirror configuration, and so on.
    """
    _require_binary(table, "M5 bounds", J=False)
    measure = Measure.parse(measure)
    table._check_nonempty()
    p = table.n_obs / table.total  # p_{txy0}
    q = table.n_mis / table.total  # p_{t+y1}

    def ratio(num, den, empty):
        with np.errstate(invalid="ignore", divide="ignore"):
            r = num / den
        return np.where(den > 0, r, empty)

    p1_lo = ratio(p[1, :, 1], p[1, :, 0] + p[1, :, 1] + q[1, 0], 0.0)
    p1_hi = ratio(p[1, :, 1] + q[1, 1], p[1, :, 0] + p[1, :, 1] + q[1, 1], 1.0)
    p0_lo = ratio(p[0, :, 1], p[0, :, 0] + p[0, :, 1] + q[0, 0], 0.0)
    p0_hi = ratio(p[0, :, 1] + q[0, 1], p[0, :, 0] + p[0, :, 1] + q[0, 1], 1.0)
    lower = np.atleast_1d(eval_measure(measure, p1_lo, p0_hi))
    upper = np.atleast_1d(eval_measure(measure, p1_hi, p0_lo))
    return BoundsResult(measure, lower, upper)
