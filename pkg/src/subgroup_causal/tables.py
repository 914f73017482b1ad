"""Observed and complete contingency tables for (T, X, Y, M).

Axis conventions used throughout the package:

* observed complete rows ``n_obs[t, x, y]`` (M = 0),
* covariate-missing margins ``n_mis[t, y]`` (M = 1, X summed out),
* joint cell probabilities ``p[t, x, y, m]``.

T is binary, X has ``J`` levels and Y has ``K`` levels.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .errors import DataError

__all__ = [
    "Mechanism",
    "ObservedTable",
    "JointDistribution",
    "MechanismSpec",
    "FactoredParams",
    "EmpiricalConditionals",
    "LogOddsRatio",
    "compose_joint",
    "observed_loglik",
    "saturated_loglik",
    "empirical_conditionals",
    "population_log_or",
]


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class Mechanism(str, enum.Enum):
    """Missing-data mechanisms for the covariate.

    ``M1``: M depends on (T, Y); ``M2``: on (T, X); ``M3``: on (X, Y);
    ``M4``: additive logit in (T, X, Y); ``M5``: unrestricted;
    ``MX``: on X only; ``SENS``: logit of P(M=0) with a fixed Y coefficient.
    """

    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"
    MX = "MX"
    SENS = "SENS"

    @classmethod
    def parse(cls, value) -> "Mechanism":
        if isinstance(value, Mechanism):
            return value
        key = str(value).strip().upper()
        if key in {"1", "2", "3", "4", "5"}:
            key = "M" + key
        if key == "X":
            key = "MX"
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown mechanism {value!r}") from None

    @property
    def index(self) -> int:
        order = ["M1", "M2", "M3", "M4", "M5", "MX", "SENS"]
        return order.index(self.value) + 1


@dataclass(frozen=True)
class ObservedTable:
    """Observable counts of a two-arm experiment with a missing covariate.

    Parameters
    ----------
    n_obs : array, shape (2, J, K)
        Counts ``N_{txy0}`` of fully observed units.
    n_mis : array, shape (2, K)
        Counts ``N_{t+y1}`` of units whose covariate is missing.

    Counts may be non-integer so that exact expected-count tables can be
    passed to the estimators.
    """

    n_obs: np.ndarray
    n_mis: np.ndarray

    def __post_init__(self):
        n_obs = np.asarray(self.n_obs, dtype=float)
        n_mis = np.asarray(self.n_mis, dtype=float)
        if n_obs.ndim != 3 or n_obs.shape[0] != 2:
            raise DataError(f"n_obs must have shape (2, J, K), got {n_obs.shape}")
        if n_mis.shape != (2, n_obs.shape[2]):
            raise DataError(
                f"n_mis must have shape (2, {n_obs.shape[2]}), got {n_mis.shape}")
        if not (np.all(np.isfinite(n_obs)) and np.all(np.isfinite(n_mis))):
            raise DataError("counts must be finite")
        if np.any(n_obs < 0) or np.any(n_mis < 0):
            raise DataError("counts must be nonnegative")
        object.__setattr__(self, "n_obs", _frozen(n_obs))
        object.__setattr__(self, "n_mis", _frozen(n_mis))

    @property
    def J(self) -> int:
        return self.n_obs.shape[1]

    @property
    def K(self) -> int:
        return self.n_obs.shape[2]

    @property
    def total(self) -> float:
        return float(self.n_obs.sum() + self.n_mis.sum())

    def arm_totals(self) -> np.ndarray:
        return self.n_obs.sum(axis=(1, 2)) + self.n_mis.sum(axis=1)

    def is_integral(self) -> bool:
        return bool(np.all(self.n_obs == np.round(self.n_obs))
                    and np.all(self.n_mis == np.round(self.n_mis)))

    def has_missing(self) -> bool:
        return bool(self.n_mis.sum() > 0)

    def scaled(self, factor: float) -> "ObservedTable":
        return ObservedTable(self.n_obs * factor, self.n_mis * factor)

    def _check_nonempty(self):
        if self.total <= 0:
            raise DataError("table is empty")

    def __eq__(self, other):
        if not isinstance(other, ObservedTable):
            return NotImplemented
        return (self.n_obs.shape == other.n_obs.shape
                and np.array_equal(self.n_obs, other.n_obs)
                and np.array_equal(self.n_mis, other.n_mis))

    def __hash__(self):
        return hash((self.n_obs.tobytes(), self.n_mis.tobytes()))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Cell probabilities ``p[t, x, y, m]`` summing to one."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 4 or p.shape[0] != 2 or p.shape[3] != 2:
            raise DataError(f"joint must have shape (2, J, K, 2), got {p.shape}")
        if np.any(~np.isfinite(p)) or np.any(p < -1e-15):
            raise DataError("joint probabilities must be finite and nonnegative")
        total = p.sum()
        if abs(total - 1.0) > 1e-10:
            raise DataError(f"joint probabilities sum to {total!r}, not 1")
        p = np.clip(p, 0.0, None) / total
        object.__setattr__(self, "p", _frozen(p))

    @property
    def J(self) -> int:
        return self.p.shape[1]

    @property
    def K(self) -> int:
        return self.p.shape[2]

    def observed_margins(self):
        """Return ``(p_txy0, p_t+y1)``, the identifiable part of the joint."""
        return self.p[..., 0], self.p[..., 1].sum(axis=1)

    def expected_table(self, n: float) -> ObservedTable:
        """Noise-free table with counts ``n`` times the observable margins."""
        obs, mis = self.observed_margins()
        return ObservedTable(n * obs, n * mis)

    def p_t(self) -> np.ndarray:
        return self.p.sum(axis=(1, 2, 3))

    def p_x(self) -> np.ndarray:
        return self.p.sum(axis=(0, 2, 3))

    def p_tx(self) -> np.ndarray:
        return self.p.sum(axis=(2, 3))

    def outcome_given_tx(self) -> np.ndarray:
        """``P(Y=y | T=t, X=x)``, shape (2, J, K)."""
        ptxy = self.p.sum(axis=3)
        den = ptxy.sum(axis=2, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return ptxy / den

    def outcome_given_t(self) -> np.ndarray:
        """``P(Y=y | T=t)``, shape (2, K)."""
        pty = self.p.sum(axis=(1, 3))
        with np.errstate(invalid="ignore", divide="ignore"):
            return pty / pty.sum(axis=1, keepdims=True)

    def prob_missing(self) -> np.ndarray:
        """``P(M=1 | T=t, X=x, Y=y)``, shape (2, J, K); NaN on empty cells."""
        ptxy = self.p.sum(axis=3)
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.p[..., 1] / ptxy

    def satisfies_positivity(self) -> bool:
        """Whether ``P(M=0 | t,x,y) > 0`` wherever ``P(t,x,y) > 0``."""
        ptxy = self.p.sum(axis=3)
        return bool(np.all((ptxy <= 0) | (self.p[..., 0] > 0)))

    def total_variation(self, other: "JointDistribution") -> float:
        return 0.5 * float(np.abs(self.p - other.p).sum())


@dataclass(frozen=True, eq=False)
class MechanismSpec:
    """Parameters of the covariate missingness model.

    ``table`` shapes by kind: M1 ``(2, K)`` over (t, y); M2 ``(2, J)`` over
    (t, x); M3 ``(J, K)`` over (x, y); MX ``(J,)``; M5 ``(2, J, K)`` (optional,
    only needed to generate data). Tables hold ``P(M=1 | .)``.

    ``coef`` for M4 is (b0, bT, bX, bY) with
    ``logit P(M=1|t,x,y) = b0 + bT t + bX x + bY y``. For SENS it is
    (b0, bT, bX, bTX) with ``logit P(M=0|t,x,y) = b0 + bT t + bX x + bTX tx
    + beta_y y``; note the opposite event.
    """

    kind: Mechanism
    table: Optional[np.ndarray] = None
    coef: Optional[np.ndarray] = None
    beta_y: float = 0.0

    def __post_init__(self):
        kind = Mechanism.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (Mechanism.M4, Mechanism.SENS):
            if self.coef is None:
                raise ValueError(f"{kind.value} requires coef")
            coef = np.asarray(self.coef, dtype=float)
            if coef.shape != (4,):
                raise ValueError("coef must have 4 entries")
            object.__setattr__(self, "coef", _frozen(coef))
            object.__setattr__(self, "beta_y", float(self.beta_y))
            return
        ndim = {Mechanism.M1: 2, Mechanism.M2: 2, Mechanism.M3: 2,
                Mechanism.MX: 1, Mechanism.M5: 3}[kind]
        if self.table is None:
            if kind is Mechanism.M5:
                return
            raise ValueError(f"{kind.value} requires a probability table")
        table = np.asarray(self.table, dtype=float)
        if table.ndim != ndim:
            raise ValueError(f"{kind.value} table must be {ndim}-dimensional")
        # P(M=1) may be 0 (no missingness) but never 1: P(M=0|.) > 0.
        if np.any(table < 0) or np.any(table >= 1) or np.any(~np.isfinite(table)):
            raise ValueError("missingness probabilities must lie in [0, 1)")
        object.__setattr__(self, "table", _frozen(table))

    def prob_missing(self, J: int, K: int) -> np.ndarray:
        """Broadcast to ``P(M=1 | T=t, X=x, Y=y)`` with shape (2, J, K)."""
        kind = self.kind
        if kind is Mechanism.M1:
            self._check_shape((2, K))
            return np.broadcast_to(self.table[:, None, :], (2, J, K)).copy()
        if kind is Mechanism.M2:
            self._check_shape((2, J))
            return np.broadcast_to(self.table[:, :, None], (2, J, K)).copy()
        if kind is Mechanism.M3:
            self._check_shape((J, K))
            return np.broadcast_to(self.table[None, :, :], (2, J, K)).copy()
        if kind is Mechanism.MX:
            self._check_shape((J,))
            return np.broadcast_to(self.table[None, :, None], (2, J, K)).copy()
        if kind is Mechanism.M5:
            if self.table is None:
                raise ValueError("M5 carries no parameters; supply a table to compose")
            self._check_shape((2, J, K))
            return self.table.copy()
        t, x, y = _txy_grid(J, K)
        b = self.coef
        if kind is Mechanism.M4:
            return expit(b[0] + b[1] * t + b[2] * x + b[3] * y)
        return expit(-(b[0] + b[1] * t + b[2] * x + b[3] * t * x + self.beta_y * y))

    def _check_shape(self, shape):
        if self.table.shape != shape:
            raise ValueError(
                f"{self.kind.value} table has shape {self.table.shape}, expected {shape}")


def _txy_grid(J, K):
    return np.meshgrid(np.arange(2), np.arange(J), np.arange(K), indexing="ij")


@dataclass(frozen=True, eq=False)
class FactoredParams:
    """``P(X) P(T|X) P(Y|T,X) P(M|T,X,Y)`` factorization of a joint.

    Parameters
    ----------
    pi_x : array, shape (J,)
    pi_t_given_x : array, shape (J,)
        ``P(T=1 | X=x)``.
    pi_y_given_tx : array, shape (2, J, K)
    missingness : MechanismSpec
    randomized : bool
        Require ``P(T | X) = P(T)``.
    """

    pi_x: np.ndarray
    pi_t_given_x: np.ndarray
    pi_y_given_tx: np.ndarray
    missingness: MechanismSpec
    randomized: bool = False

    def __post_init__(self):
        pi_x = np.asarray(self.pi_x, dtype=float)
        pt = np.asarray(self.pi_t_given_x, dtype=float)
        py = np.asarray(self.pi_y_given_tx, dtype=float)
        J = pi_x.shape[0]
        if pi_x.ndim != 1 or pt.shape != (J,) or py.ndim != 3 or py.shape[:2] != (2, J):
            raise ValueError("inconsistent factor shapes")
        for name, arr in (("pi_x", pi_x), ("pi_t_given_x", pt), ("pi_y_given_tx", py)):
            if np.any(arr < 0) or np.any(arr > 1) or np.any(~np.isfinite(arr)):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if abs(pi_x.sum() - 1) > 1e-10:
            raise ValueError("pi_x must sum to 1")
        if np.any(np.abs(py.sum(axis=2) - 1) > 1e-10):
            raise ValueError("rows of pi_y_given_tx must sum to 1")
        if self.randomized and np.ptp(pt) > 1e-12:
            raise ValueError("randomized design requires P(T=1|X=x) constant in x")
        object.__setattr__(self, "pi_x", _frozen(pi_x))
        object.__setattr__(self, "pi_t_given_x", _frozen(pt))
        object.__setattr__(self, "pi_y_given_tx", _frozen(py))

    @property
    def J(self) -> int:
        return self.pi_x.shape[0]

    @property
    def K(self) -> int:
        return self.pi_y_given_tx.shape[2]


def _compose(pi_x, pt1, py, pm):
    ptx = np.stack([1.0 - pt1, pt1]) * pi_x[None, :]
    ptxy = ptx[:, :, None] * py
    return np.stack([ptxy * (1.0 - pm), ptxy * pm], axis=-1)


def compose_joint(params: FactoredParams) -> JointDistribution:
    """Multiply the four factors into ``p[t, x, y, m]``."""
    pm = params.missingness.prob_missing(params.J, params.K)
    return JointDistribution(_compose(params.pi_x, params.pi_t_given_x,
                                      params.pi_y_given_tx, pm))


def _xlogy_sum(n, p):
    """sum n*log(p) with 0*log(.) = 0 and -inf on n>0, p=0."""
    pos = n > 0
    if np.any(p[pos] <= 0):
        return -math.inf
    return float(np.sum(n[pos] * np.log(p[pos])))


def _check_dims(table: ObservedTable, joint: JointDistribution):
    if (table.J, table.K) != (joint.J, joint.K):
        raise DataError(
            f"table is {table.J}x{table.K} but joint is {joint.J}x{joint.K}")


def observed_loglik(table: ObservedTable, joint: JointDistribution) -> float:
    """Observed-data log-likelihood ``sum N log p`` over the observable cells."""
    _check_dims(table, joint)
    obs, mis = joint.observed_margins()
    return _xlogy_sum(table.n_obs, obs) + _xlogy_sum(table.n_mis, mis)


def saturated_loglik(table: ObservedTable) -> float:
    """Log-likelihood at the empirical proportions of the observable cells."""
    table._check_nonempty()
    n = table.total
    return _xlogy_sum(table.n_obs, table.n_obs / n) + _xlogy_sum(table.n_mis, table.n_mis / n)


class EmpiricalConditionals(NamedTuple):
    p_obs_given_t: np.ndarray
    """``P(X=x, Y=y, M=0 | T=t)``, shape (2, J, K)."""
    p_mis_given_t: np.ndarray
    """``P(Y=y, M=1 | T=t)``, shape (2, K)."""
    p_t: np.ndarray
    """``P(T=t)``, shape (2,)."""


def empirical_conditionals(table: ObservedTable) -> EmpiricalConditionals:
    """Within-arm proportions of the observable cells."""
    arms = table.arm_totals()
    if np.any(arms <= 0):
        raise DataError("each treatment arm needs a positive total count")
    return EmpiricalConditionals(
        table.n_obs / arms[:, None, None],
        table.n_mis / arms[:, None],
        arms / arms.sum(),
    )


class LogOddsRatio(NamedTuple):
    estimate: float
    se: float
    degenerate: bool


def population_log_or(table: ObservedTable) -> LogOddsRatio:
    """Log odds ratio of Y on T pooling over X and M, with its Wald SE."""
    if table.K != 2:
        raise DataError("population log odds ratio needs a binary outcome")
    cells = table.n_obs.sum(axis=1) + table.n_mis  # [t, y]
    if np.any(cells <= 0):
        num = cells[1, 1] * cells[0, 0]
        den = cells[1, 0] * cells[0, 1]
        est = math.inf if num > 0 else (-math.inf if den > 0 else math.nan)
        return LogOddsRatio(est, math.inf, True)
    est = math.log(cells[1, 1]) + math.log(cells[0, 0]) - math.log(cells[1, 0]) - math.log(cells[0, 1])
    se = math.sqrt(float(np.sum(1.0 / cells)))
    return LogOddsRatio(est, se, False)
