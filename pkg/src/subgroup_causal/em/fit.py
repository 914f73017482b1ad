"""EM maximum likelihood for covariate missingness mechanisms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.special import expit

from ..errors import ConvergenceError, DataError
from ..tables import (FactoredParams, JointDistribution, Mechanism, MechanismSpec,
                      ObservedTable, _compose, _txy_grid)
from .logistic import irls_logistic

__all__ = ["EmOptions", "EmFit", "em_fit", "em_local_maxima", "FITTABLE"]

FITTABLE = (Mechanism.M1, Mechanism.M2, Mechanism.M3, Mechanism.M4,
            Mechanism.MX, Mechanism.SENS)
BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class EmOptions:
    """Controls for :func:`em_fit`.

    Parameters
    ----------
    max_iter : int
    loglik_tolerance : float
        Stop once the absolute change in log-likelihood falls below this.
    start : {"empirical", "uniform"} or FactoredParams
        ``"empirical"`` spreads each missing count evenly over the covariate
        levels and takes one M-step from there.
    randomized : bool
        Constrain ``P(T | X) = P(T)``.
    """

    max_iter: int = 5000
    loglik_tolerance: float = 1e-10
    start: Union[str, FactoredParams] = "empirical"
    randomized: bool = False

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.loglik_tolerance > 0:
            raise ValueError("loglik_tolerance must be positive")
        if isinstance(self.start, str) and self.start not in ("empirical", "uniform"):
            raise ValueError(f"unknown start {self.start!r}")


@dataclass(frozen=True, eq=False)
class EmFit:
    joint: JointDistribution
    params: FactoredParams
    loglik: float
    iterations: int
    converged: bool
    trace: np.ndarray
    mechanism: Mechanism
    on_boundary: bool = False
    coef: Optional[np.ndarray] = field(default=None, repr=False)


class _State:
    """Raw factor arrays manipulated inside the EM loop."""

    __slots__ = ("px", "pt1", "py", "pm", "coef")

    def __init__(self, px, pt1, py, pm, coef=None):
        self.px, self.pt1, self.py, self.pm, self.coef = px, pt1, py, pm, coef

    def joint(self):
        return _compose(self.px, self.pt1, self.py, self.pm)


def _loglik(n_obs, n_mis, p):
    p_obs = p[..., 0]
    p_mis = p[..., 1].sum(axis=1)
    with np.errstate(divide="ignore"):
        a = np.where(n_obs > 0, n_obs * np.log(np.where(n_obs > 0, p_obs, 1.0)), 0.0)
        b = np.where(n_mis > 0, n_mis * np.log(np.where(n_mis > 0, p_mis, 1.0)), 0.0)
    return float(a.sum() + b.sum())


def _ratio(num, den, fill=0.0):
    out = np.full(np.broadcast(num, den).shape, fill, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


class _Fitter:
    def __init__(self, table: ObservedTable, kind: Mechanism, randomized: bool,
                 beta_y: float = 0.0):
        self.n_obs = np.asarray(table.n_obs, dtype=float)
        self.n_mis = np.asarray(table.n_mis, dtype=float)
        self.J, self.K = table.J, table.K
        self.N = table.total
        self.kind = kind
        self.randomized = randomized
        self.beta_y = float(beta_y)
        if kind in (Mechanism.M4, Mechanism.SENS):
            t, x, y = _txy_grid(self.J, self.K)
            self.t, self.x, self.y = t.ravel(), x.ravel(), y.ravel()
            last = self.x * self.t if kind is Mechanism.SENS else self.y
            self.design = np.column_stack([np.ones_like(self.t), self.t, self.x, last]).astype(float)
            self.offset = self.beta_y * self.y if kind is Mechanism.SENS else None

    def e_step(self, p):
        w = p[..., 1]
        tot = w.sum(axis=1, keepdims=True)
        w = np.where(tot > 0, _ratio(w, tot), 1.0 / self.J)
        return self.n_mis[:, None, :] * w

    def m_step(self, n1, coef=None) -> _State:
        n0 = self.n_obs
        nc = n0 + n1
        N = self.N
        nx = nc.sum(axis=(0, 2))
        px = nx / N
        if self.randomized:
            pt1 = np.full(self.J, nc[1].sum() / N)
        else:
            pt1 = _ratio(nc[1].sum(axis=1), nx, 0.5)
        ntx = nc.sum(axis=2, keepdims=True)
        py = np.where(ntx > 0, _ratio(nc, ntx), 1.0 / self.K)
        J, K = self.J, self.K
        kind = self.kind
        if kind is Mechanism.M1:
            pm = np.broadcast_to(_ratio(n1.sum(1), nc.sum(1))[:, None, :], (2, J, K))
        elif kind is Mechanism.M2:
            pm = np.broadcast_to(_ratio(n1.sum(2), nc.sum(2))[:, :, None], (2, J, K))
        elif kind is Mechanism.M3:
            pm = np.broadcast_to(_ratio(n1.sum(0), nc.sum(0))[None], (2, J, K))
        elif kind is Mechanism.MX:
            pm = np.broadcast_to(_ratio(n1.sum((0, 2)), nc.sum((0, 2)))[None, :, None],
                                 (2, J, K))
        elif kind is Mechanism.M4:
            fit = irls_logistic(self.design, n1.ravel(), n0.ravel(), start=coef)
            coef = fit.coef
            pm = expit(self.design @ coef).reshape(2, J, K)
        else:  # SENS: logistic model for the observed event M=0
            fit = irls_logistic(self.design, n0.ravel(), n1.ravel(),
                                offset=self.offset, start=coef)
            coef = fit.coef
            pm = expit(-(self.design @ coef + self.offset)).reshape(2, J, K)
        return _State(px, pt1, py, np.array(pm), coef)

    def start(self, start) -> _State:
        J, K = self.J, self.K
        if isinstance(start, FactoredParams):
            if (start.J, start.K) != (J, K):
                raise DataError("start parameters do not match the table dimensions")
            ms = start.missingness
            coef = None
            if self.kind in (Mechanism.M4, Mechanism.SENS) and ms.coef is not None:
                coef = np.array(ms.coef)
            pm = ms.prob_missing(J, K)
            pt1 = np.array(start.pi_t_given_x)
            if self.randomized:
                pt1 = np.full(J, float(pt1 @ start.pi_x))
            return _State(np.array(start.pi_x), pt1, np.array(start.pi_y_given_tx), pm, coef)
        if start == "uniform":
            arm = self.n_obs.sum(axis=(1, 2)) + self.n_mis.sum(axis=1)
            pt1 = np.full(J, arm[1] / arm.sum())
            st = _State(np.full(J, 1.0 / J), pt1, np.full((2, J, K), 1.0 / K),
                        np.full((2, J, K), 0.5), None)
            if self.kind is Mechanism.M4:
                st.coef = np.zeros(4)
            elif self.kind is Mechanism.SENS:
                # P(M=0) = 1/2 at y=0; the fixed offset moves it at y>0
                st.coef = np.zeros(4)
                st.pm = expit(-self.offset).reshape(2, J, K)
            return st
        return self.m_step(self.e_step(np.ones((2, J, K, 2))))


def _boundary(st: _State, n_mis) -> bool:
    pm = st.pm
    near = lambda a: bool(np.any(a < BOUNDARY_TOL) or np.any(a > 1 - BOUNDARY_TOL))
    pm_check = pm if n_mis.sum() > 0 else np.zeros(0)
    return near(st.px) or near(st.pt1) or near(st.py) or near(pm_check)


def _params(st: _State, kind: Mechanism, randomized: bool, beta_y: float) -> FactoredParams:
    below_one = np.nextafter(1.0, 0.0)
    pm = st.pm
    if kind is Mechanism.M1:
        spec = MechanismSpec(kind, table=np.minimum(pm[:, 0, :], below_one))
    elif kind is Mechanism.M2:
        spec = MechanismSpec(kind, table=np.minimum(pm[:, :, 0], below_one))
    elif kind is Mechanism.M3:
        spec = MechanismSpec(kind, table=np.minimum(pm[0], below_one))
    elif kind is Mechanism.MX:
        spec = MechanismSpec(kind, table=np.minimum(pm[0, :, 0], below_one))
    else:
        spec = MechanismSpec(kind, coef=st.coef, beta_y=beta_y)
    return FactoredParams(st.px, st.pt1, st.py, spec, randomized=randomized)


def _run(fitter: _Fitter, st: _State, options: EmOptions):
    p = st.joint()
    ll = _loglik(fitter.n_obs, fitter.n_mis, p)
    if not np.isfinite(ll):
        raise ConvergenceError("degenerate start: observed data has zero probability")
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, int(options.max_iter) + 1):
        st = fitter.m_step(fitter.e_step(p), st.coef)
        p = st.joint()
        new = _loglik(fitter.n_obs, fitter.n_mis, p)
        trace.append(new)
        if abs(new - ll) < options.loglik_tolerance:
            ll = new
            converged = True
            break
        ll = new
    return st, p, ll, it, converged, np.array(trace)


def em_fit(table: ObservedTable, mechanism, options: Optional[EmOptions] = None,
           sensitivity_beta_y: float = 0.0) -> EmFit:
    """Maximum likelihood fit of the factored model by EM.

    Parameters
    ----------
    table : ObservedTable
    mechanism : Mechanism or str
        One of M1, M2, M3, M4, MX or SENS. M4 and SENS need binary X and Y.
    options : EmOptions, optional
    sensitivity_beta_y : float
        Fixed outcome coefficient for the SENS mechanism.

    Returns
    -------
    EmFit
        ``converged`` is False when ``max_iter`` ran out; the last iterate
        is returned regardless.

    Raises
    ------
    ConvergenceError
        If the start gives the observed data zero probability.
    """
    options = options or EmOptions()
    kind = Mechanism.parse(mechanism)
    if kind not in FITTABLE:
        raise ValueError(f"EM is not defined for mechanism {kind.value}")
    if kind in (Mechanism.M4, Mechanism.SENS) and (table.J != 2 or table.K != 2):
        raise DataError(f"{kind.value} requires binary covariate and outcome")
    table._check_nonempty()
    fitter = _Fitter(table, kind, options.randomized, sensitivity_beta_y)
    st, p, ll, it, converged, trace = _run(fitter, fitter.start(options.start), options)
    return EmFit(JointDistribution(p), _params(st, kind, options.randomized, sensitivity_beta_y),
                 ll, it, converged, trace, kind, _boundary(st, fitter.n_mis),
                 None if st.coef is None else st.coef.copy())


def _random_state(fitter: _Fitter, rng: np.random.Generator) -> _State:
    J, K = fitter.J, fitter.K
    px = rng.dirichlet(np.ones(J))
    pt1 = np.full(J, rng.uniform(0.05, 0.95)) if fitter.randomized else rng.uniform(0.05, 0.95, J)
    py = rng.dirichlet(np.ones(K), size=(2, J))
    coef = None
    if fitter.kind in (Mechanism.M4, Mechanism.SENS):
        coef = rng.normal(0.0, 1.5, 4)
        eta = fitter.design @ coef
        pm = expit(eta) if fitter.kind is Mechanism.M4 else expit(-(eta + fitter.offset))
        pm = pm.reshape(2, J, K)
    else:
        shape = {Mechanism.M1: (2, 1, K), Mechanism.M2: (2, J, 1),
                 Mechanism.M3: (1, J, K), Mechanism.MX: (1, J, 1)}[fitter.kind]
        pm = np.broadcast_to(rng.uniform(0.02, 0.98, shape), (2, J, K)).copy()
    return _State(px, pt1, py, pm, coef)


def em_local_maxima(table: ObservedTable, mechanism, n_starts: int = 50, seed=0,
                    options: Optional[EmOptions] = None,
                    sensitivity_beta_y: float = 0.0, decimals: int = 4) -> List[EmFit]:
    """Distinct EM fixed points reached from random starting values.

    Runs :func:`em_fit` logic from ``n_starts`` seeded random starts and
    keeps one fit per log-likelihood value rounded to ``decimals`` places.
    Fits are returned best first. Useful when the likelihood is multimodal.
    """
    options = options or EmOptions()
    kind = Mechanism.parse(mechanism)
    if kind not in FITTABLE:
        raise ValueError(f"EM is not defined for mechanism {kind.value}")
    table._check_nonempty()
    fitter = _Fitter(table, kind, options.randomized, sensitivity_beta_y)
    rng = np.random.default_rng(seed)
    found = {}
    for _ in range(n_starts):
        st0 = _random_state(fitter, rng)
        try:
            st, p, ll, it, converged, trace = _run(fitter, st0, options)
        except ConvergenceError:
            continue
        key = round(ll, decimals)
        if key not in found:
            found[key] = EmFit(JointDistribution(p),
                               _params(st, kind, options.randomized, sensitivity_beta_y),
                               ll, it, converged, trace, kind,
                               _boundary(st, fitter.n_mis),
                               None if st.coef is None else st.coef.copy())
    return sorted(found.values(), key=lambda f: -f.loglik)
