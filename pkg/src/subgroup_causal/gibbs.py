"""Data-augmentation Gibbs sampler for the factored missingness models.

Each sweep imputes the covariate of the incomplete units as a multinomial
split of every (t, y) margin, then redraws the probability factors from
their conjugate Beta/Dirichlet posteriors. Under M4 the logistic
coefficients get a componentwise random-walk Metropolis update.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Tuple

import numba
import numpy as np

from .errors import DataError
from .measures import Measure, eval_measure
from .tables import Mechanism, ObservedTable, _txy_grid

__all__ = ["GibbsOptions", "PosteriorDraws", "PosteriorSummary", "EffectModification",
           "gibbs_run", "posterior_summary", "effect_modification_test"]

SAMPLED = (Mechanism.M1, Mechanism.M2, Mechanism.M3, Mechanism.M4, Mechanism.MX)
COEF_LIMIT = 30.0
ACCEPT_RANGE = (0.05, 0.9)


@dataclass(frozen=True)
class GibbsOptions:
    """Sampler settings.

    Parameters
    ----------
    iterations, burnin : int
        Draws ``burnin, ..., iterations - 1`` are retained.
    seed : int
    prior : (float, float)
        Beta(a, b) hyperparameters used for every probability factor. For
        factors with more than two levels the Dirichlet weight is ``b`` on
        level 0 and ``a`` elsewhere.
    mh_proposal_scale : float
        Initial random-walk standard deviation for the M4 coefficients.
    adapt : bool
        Halve or double each proposal scale during burn-in to steer the
        acceptance rate into 30-40%.
    randomized : bool
        Draw a single ``P(T=1)`` instead of ``P(T=1|X=x)``.
    """

    iterations: int = 10000
    burnin: int = 5000
    seed: int = 0
    prior: Tuple[float, float] = (0.5, 0.5)
    mh_proposal_scale: float = 0.1
    adapt: bool = True
    randomized: bool = True

    def __post_init__(self):
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("need 0 <= burnin < iterations")
        if not self.mh_proposal_scale > 0:
            raise ValueError("proposal scale must be positive")
        if len(self.prior) != 2 or min(self.prior) <= 0:
            raise ValueError("prior must be two positive Beta hyperparameters")


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """Retained draws of the factored parameters.

    Arrays have the retained draws on axis 0: ``pi_x`` (R, J), ``pi_t``
    (R, J) holding ``P(T=1|X=x)``, ``pi_y`` (R, 2, J, K) and ``pi_m``
    (R, 2, J, K) holding ``P(M=1|t,x,y)``. ``coef`` is (R, 4) under M4.
    """

    mechanism: Mechanism
    pi_x: np.ndarray
    pi_t: np.ndarray
    pi_y: np.ndarray
    pi_m: np.ndarray
    coef: Optional[np.ndarray]
    acceptance_rate: Optional[np.ndarray]
    warning: Optional[str]
    options: GibbsOptions

    def __len__(self):
        return self.pi_x.shape[0]

    @cached_property
    def joints(self) -> np.ndarray:
        """Joint probabilities, shape (R, 2, J, K, 2)."""
        pt = self.pi_t[:, None, :]
        ptx = np.concatenate([1.0 - pt, pt], axis=1) * self.pi_x[:, None, :]
        ptxy = ptx[..., None] * self.pi_y
        return np.stack([ptxy * (1.0 - self.pi_m), ptxy * self.pi_m], axis=-1)

    def effects(self, measure=Measure.LOG_COR) -> np.ndarray:
        """Per-draw subgroup effects, shape (R, J); needs a binary outcome."""
        if self.pi_y.shape[-1] != 2:
            raise DataError("causal measures need a binary outcome")
        q = self.pi_y[..., 1]
        return eval_measure(measure, q[:, 1, :], q[:, 0, :])


class PosteriorSummary(NamedTuple):
    median: float
    lower: float
    upper: float
    n_draws: int


class EffectModification(NamedTuple):
    """Posterior of ``CE_0 - CE_1``."""

    median: float
    lower: float
    upper: float
    contains_zero: bool


def _target_values(draws: PosteriorDraws, target) -> np.ndarray:
    if isinstance(target, str):
        name, _, level = target.lower().rpartition("_")
        if not name or not level.isdigit():
            raise ValueError(f"target {target!r} should look like 'log_cor_1' or 'crr_0'")
        if name == "crr":
            return np.exp(draws.effects(Measure.LOG_CRR)[:, int(level)])
        return draws.effects(Measure.parse(name))[:, int(level)]
    return np.asarray(target, dtype=float).ravel()


def posterior_summary(draws, target=None, level: float = 0.95) -> PosteriorSummary:
    """Median and equal-tailed credible interval (linear interpolation quantiles).

    Parameters
    ----------
    draws : PosteriorDraws or array
        Plain arrays are summarized directly.
    target : str or array, optional
        ``"<measure>_<x>"`` such as ``"log_cor_1"``, ``"crd_0"`` or ``"crr_1"``
        (risk ratio on the natural scale).
    """
    values = _target_values(draws, target) if isinstance(draws, PosteriorDraws) \
        else np.asarray(draws, dtype=float).ravel()
    if values.size < 100:
        raise DataError("at least 100 draws are needed for a summary")
    alpha = (1.0 - level) / 2.0
    lo, med, hi = np.quantile(values, [alpha, 0.5, 1.0 - alpha], method="linear")
    return PosteriorSummary(float(med), float(lo), float(hi), int(values.size))


def effect_modification_test(draws: PosteriorDraws, measure=Measure.LOG_COR,
                             level: float = 0.95) -> EffectModification:
    ce = draws.effects(measure)
    if ce.shape[1] != 2:
        raise DataError("effect modification test needs a binary covariate")
    s = posterior_summary(ce[:, 0] - ce[:, 1], level=level)
    return EffectModification(s.median, s.lower, s.upper, bool(s.lower <= 0.0 <= s.upper))


def _strata(kind: Mechanism, J: int, K: int):
    """Index of the missingness stratum for every (t, x, y) cell."""
    t, x, y = _txy_grid(J, K)
    if kind is Mechanism.M1:
        return t * K + y, 2 * K
    if kind is Mechanism.M2:
        return t * J + x, 2 * J
    if kind is Mechanism.M3:
        return x * K + y, J * K
    if kind is Mechanism.MX:
        return x, J
    return np.zeros_like(t), 1


@numba.njit(cache=True)
def _beta(rng, a, b):
    g1 = rng.standard_gamma(a)
    g0 = rng.standard_gamma(b)
    return g1 / (g0 + g1)


@numba.njit(cache=True)
def _dirichlet_into(rng, alpha, out):
    tot = 0.0
    for i in range(alpha.shape[0]):
        out[i] = rng.standard_gamma(alpha[i])
        tot += out[i]
    for i in range(alpha.shape[0]):
        out[i] /= tot


@numba.njit(cache=True)
def _grouped_loglik(eta, succ, fail):
    ll = 0.0
    for c in range(eta.shape[0]):
        e = eta[c]
        # log expit(e) = -log1p(exp(-e)), computed stably
        if e >= 0:
            lp, lq = -np.log1p(np.exp(-e)), -e - np.log1p(np.exp(-e))
        else:
            lp, lq = e - np.log1p(np.exp(e)), -np.log1p(np.exp(e))
        ll += succ[c] * lp + fail[c] * lq
    return ll


@numba.njit(cache=True)
def _chain(rng, n_obs, n_mis, strata, n_strata, m4, randomized, a, b,
           iterations, burnin, scale, adapt, design,
           out_x, out_t, out_y, out_m, out_coef, accepted):
    """Run one chain in place; see :func:`gibbs_run` for the model."""
    J, K = n_obs.shape[1], n_obs.shape[2]
    px = np.full(J, 1.0 / J)
    arm1 = n_obs[1].sum() + n_mis[1].sum()
    pt1 = np.full(J, arm1 / (n_obs.sum() + n_mis.sum()))
    py = np.full((2, J, K), 1.0 / K)
    pm = np.full((2, J, K), 0.5)
    coef = np.zeros(4)
    eta = np.zeros(2 * J * K)
    n1 = np.zeros((2, J, K), dtype=np.int64)
    w = np.empty(J)
    alpha_x = np.empty(J)
    alpha_y = np.empty(K)
    buf_x = np.empty(J)
    buf_y = np.empty(K)
    m1 = np.empty(n_strata)
    m0 = np.empty(n_strata)
    pm_s = np.empty(n_strata)
    succ = np.empty(2 * J * K)
    fail = np.empty(2 * J * K)
    window = np.zeros(4)
    for t in range(2):
        for x in range(J):
            for y in range(K):
                fail[(t * J + x) * K + y] = n_obs[t, x, y]

    for it in range(iterations):
        # imputation: sequential binomials give the multinomial split over x
        for t in range(2):
            for y in range(K):
                tot = 0.0
                for x in range(J):
                    ptx = pt1[x] if t == 1 else 1.0 - pt1[x]
                    w[x] = px[x] * ptx * py[t, x, y] * pm[t, x, y]
                    tot += w[x]
                left = n_mis[t, y]
                for x in range(J - 1):
                    if left > 0 and tot > 0:
                        frac = min(max(w[x] / tot, 0.0), 1.0)
                        k = rng.binomial(left, frac)
                    else:
                        k = 0
                    n1[t, x, y] = k
                    left -= k
                    tot -= w[x]
                n1[t, J - 1, y] = left

        # covariate and treatment factors
        for x in range(J):
            s = 0.0
            for t in range(2):
                for y in range(K):
                    s += n_obs[t, x, y] + n1[t, x, y]
            alpha_x[x] = (b if x == 0 else a) + s
        _dirichlet_into(rng, alpha_x, buf_x)
        px[:] = buf_x
        if randomized:
            c1 = 0.0
            c0 = 0.0
            for x in range(J):
                for y in range(K):
                    c1 += n_obs[1, x, y] + n1[1, x, y]
                    c0 += n_obs[0, x, y] + n1[0, x, y]
            p = _beta(rng, a + c1, b + c0)
            pt1[:] = p
        else:
            for x in range(J):
                c1 = 0.0
                c0 = 0.0
                for y in range(K):
                    c1 += n_obs[1, x, y] + n1[1, x, y]
                    c0 += n_obs[0, x, y] + n1[0, x, y]
                pt1[x] = _beta(rng, a + c1, b + c0)

        # outcome factor
        for t in range(2):
            for x in range(J):
                for y in range(K):
                    alpha_y[y] = (b if y == 0 else a) + n_obs[t, x, y] + n1[t, x, y]
                _dirichlet_into(rng, alpha_y, buf_y)
                py[t, x, :] = buf_y

        # missingness factor
        if not m4:
            m1[:] = 0.0
            m0[:] = 0.0
            for t in range(2):
                for x in range(J):
                    for y in range(K):
                        s = strata[t, x, y]
                        m1[s] += n1[t, x, y]
                        m0[s] += n_obs[t, x, y]
            for s in range(n_strata):
                pm_s[s] = _beta(rng, a + m1[s], b + m0[s])
            for t in range(2):
                for x in range(J):
                    for y in range(K):
                        pm[t, x, y] = pm_s[strata[t, x, y]]
        else:
            for t in range(2):
                for x in range(J):
                    for y in range(K):
                        succ[(t * J + x) * K + y] = n1[t, x, y]
            ll = _grouped_loglik(eta, succ, fail)
            for j in range(4):
                step = scale[j] * rng.standard_normal()
                log_u = np.log(rng.random())
                prop = coef[j] + step
                if abs(prop) > COEF_LIMIT:
                    continue
                eta_new = eta + step * design[:, j]
                ll_new = _grouped_loglik(eta_new, succ, fail)
                if log_u < ll_new - ll:
                    coef[j] = prop
                    eta = eta_new
                    ll = ll_new
                    window[j] += 1.0
                    if it >= burnin:
                        accepted[j] += 1.0
            if adapt and it < burnin and (it + 1) % 100 == 0:
                for j in range(4):
                    rate = window[j] / 100.0
                    if rate < 0.3:
                        scale[j] /= 2.0
                    elif rate > 0.4:
                        scale[j] *= 2.0
                    window[j] = 0.0
            for t in range(2):
                for x in range(J):
                    for y in range(K):
                        pm[t, x, y] = 1.0 / (1.0 + np.exp(-eta[(t * J + x) * K + y]))

        if it >= burnin:
            r = it - burnin
            out_x[r] = px
            out_t[r] = pt1
            out_y[r] = py
            out_m[r] = pm
            out_coef[r] = coef


def gibbs_run(table: ObservedTable, mechanism, options: Optional[GibbsOptions] = None
              ) -> PosteriorDraws:
    """Sample the posterior of the factored model under ``mechanism``.

    Parameters
    ----------
    table : ObservedTable
        Integer counts.
    mechanism : Mechanism or str
        M1, M2, M3, M4 or MX; M4 needs binary X and Y.
    options : GibbsOptions, optional

    Returns
    -------
    PosteriorDraws
        Identical inputs and seed give bit-identical draws.
    """
    options = options or GibbsOptions()
    kind = Mechanism.parse(mechanism)
    if kind not in SAMPLED:
        raise ValueError(f"no sampler for mechanism {kind.value}")
    if not table.is_integral():
        raise DataError("the sampler needs integer counts")
    if kind is Mechanism.M4 and (table.J != 2 or table.K != 2):
        raise DataError("M4 requires binary covariate and outcome")
    table._check_nonempty()
    J, K = table.J, table.K
    n_obs = np.asarray(table.n_obs, dtype=np.int64)
    n_mis = np.asarray(table.n_mis, dtype=np.int64)
    a, b = map(float, options.prior)
    m4 = kind is Mechanism.M4
    strata, n_strata = _strata(kind, J, K)
    t, x, y = (g.ravel().astype(float) for g in _txy_grid(J, K))
    design = np.column_stack([np.ones_like(t), t, x, y])
    scale = np.full(4, float(options.mh_proposal_scale))
    R = options.iterations - options.burnin
    out_x = np.empty((R, J))
    out_t = np.empty((R, J))
    out_y = np.empty((R, 2, J, K))
    out_m = np.empty((R, 2, J, K))
    out_coef = np.empty((R, 4))
    accepted = np.zeros(4)
    rng = np.random.default_rng(options.seed)
    _chain(rng, n_obs, n_mis, strata.astype(np.int64), n_strata, m4, bool(options.randomized),
           a, b, int(options.iterations), int(options.burnin), scale, bool(options.adapt),
           design, out_x, out_t, out_y, out_m, out_coef, accepted)

    rate, warning = None, None
    if m4:
        rate = accepted / R
        if np.any(rate <= ACCEPT_RANGE[0]) or np.any(rate >= ACCEPT_RANGE[1]):
            warning = (f"Metropolis acceptance rates {np.round(rate, 3).tolist()} "
                       f"outside {ACCEPT_RANGE}")
    return PosteriorDraws(kind, out_x, out_t, out_y, out_m, out_coef if m4 else None,
                          rate, warning, options)
