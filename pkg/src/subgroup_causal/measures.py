"""Causal contrasts D[p1, p0] and subgroup effects evaluated on a joint."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .tables import JointDistribution

__all__ = ["Measure", "CausalEstimate", "eval_measure", "crr", "effects_from_joint"]


class Measure(str, enum.Enum):
    CRD = "CRD"
    LOG_CRR = "LOG_CRR"
    LOG_COR = "LOG_COR"

    @classmethod
    def parse(cls, value) -> "Measure":
        if isinstance(value, Measure):
            return value
        key = str(value).strip().lower()
        aliases = {"crd": cls.CRD, "rd": cls.CRD,
                   "crr": cls.LOG_CRR, "log_crr": cls.LOG_CRR, "logcrr": cls.LOG_CRR,
                   "cor": cls.LOG_COR, "log_cor": cls.LOG_COR, "logcor": cls.LOG_COR}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown measure {value!r}") from None


def eval_measure(measure, p1, p0):
    """Evaluate D[p1, p0]; boundary probabilities give +-inf per the formula.

    Works elementwise on arrays. ``0/0`` forms evaluate to NaN.
    """
    measure = Measure.parse(measure)
    p1 = np.asarray(p1, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if measure is Measure.CRD:
            out = p1 - p0
        elif measure is Measure.LOG_CRR:
            out = np.log(p1) - np.log(p0)
        else:
            out = np.log(p1) + np.log1p(-p0) - np.log(p0) - np.log1p(-p1)
    return out[()] if out.ndim == 0 else out


def crr(p1, p0):
    """Causal risk ratio ``exp(log CRR)``."""
    return np.exp(eval_measure(Measure.LOG_CRR, p1, p0))


@dataclass(frozen=True, eq=False)
class CausalEstimate:
    """Subgroup effects ``ce_x`` and the population effect ``ce_total``.

    ``p_treated[x]`` and ``p_control[x]`` are the success probabilities the
    contrast was evaluated on (NaN when only the contrast is identified).
    """

    measure: Measure
    ce_x: np.ndarray
    ce_total: float
    provenance: str = ""
    p_treated: Optional[np.ndarray] = None
    p_control: Optional[np.ndarray] = None


def effects_from_joint(joint: JointDistribution, measure=Measure.LOG_COR,
                       assume: str = "latent_ignorable",
                       provenance: str = "") -> CausalEstimate:
    """Subgroup and population effects implied by a joint of (T, X, Y, M).

    Parameters
    ----------
    joint : JointDistribution
        Binary outcome required.
    measure : Measure or str
    assume : {"latent_ignorable", "complete_randomization"}
        Governs ``ce_total``: under complete randomization it contrasts
        ``P(Y=1|T=t)``; under latent ignorability it contrasts the
        X-standardized risks ``sum_x P(Y=1|T=t,X=x) P(X=x)``.
    """
    measure = Measure.parse(measure)
    if joint.K != 2:
        raise DataError("causal measures need a binary outcome")
    if np.any(joint.p_tx() <= 0):
        raise DataError("P(T=t, X=x) must be positive for every t, x")
    q = joint.outcome_given_tx()[..., 1]  # [t, x]
    ce_x = eval_measure(measure, q[1], q[0])
    if assume in ("complete_randomization", "randomized"):
        r = joint.outcome_given_t()[:, 1]
    elif assume in ("latent_ignorable", "latent"):
        r = q @ joint.p_x()
    else:
        raise ValueError(f"unknown assumption {assume!r}")
    ce_total = float(eval_measure(measure, r[1], r[0]))
    return CausalEstimate(measure, np.atleast_1d(ce_x), ce_total, provenance,
                          q[1].copy(), q[0].copy())
