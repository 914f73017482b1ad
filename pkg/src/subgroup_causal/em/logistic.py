"""Grouped-binomial logistic regression by iteratively reweighted least squares."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_expit

from ..errors import DataError

__all__ = ["LogisticFit", "irls_logistic", "grouped_binomial_loglik"]

COEF_CAP = 30.0


class LogisticFit(NamedTuple):
    coef: np.ndarray
    converged: bool
    separated: bool
    """True when a coefficient was capped at +-30 (separation)."""
    iterations: int
    loglik: float


def grouped_binomial_loglik(design, successes, failures, coef, offset=None) -> float:
    eta = design @ coef
    if offset is not None:
        eta = eta + offset
    return float(np.sum(successes * log_expit(eta) + failures * log_expit(-eta)))


def irls_logistic(design, successes, failures, offset=None, start=None,
                  tol: float = 1e-10, max_iter: int = 100) -> LogisticFit:
    """Maximize ``sum s log expit(eta) + f log expit(-eta)`` over the coefficients.

    Parameters
    ----------
    design : array, shape (n, p)
        One row per cell.
    successes, failures : array, shape (n,)
        Nonnegative (possibly fractional) weights.
    offset : array, shape (n,), optional
        Fixed term added to the linear predictor.
    start : array, shape (p,), optional
        Warm start; zeros by default.
    tol : float
        Convergence threshold on the norm of the score.

    Newton steps are halved until the log-likelihood does not decrease.
    Coefficients are kept within +-30; hitting the cap sets ``separated``.
    """
    X = np.asarray(design, dtype=float)
    s = np.asarray(successes, dtype=float)
    f = np.asarray(failures, dtype=float)
    if np.any(s < 0) or np.any(f < 0):
        raise DataError("logistic weights must be nonnegative")
    w = s + f
    n, p = X.shape
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if np.linalg.matrix_rank(X[w > 0]) < p:
        raise DataError("design is rank deficient on the positively weighted cells")
    beta = np.zeros(p) if start is None else np.clip(np.asarray(start, dtype=float),
                                                     -COEF_CAP, COEF_CAP)

    def loglik(b):
        eta = X @ b + off
        return float(np.sum(s * log_expit(eta) + f * log_expit(-eta)))

    ll = loglik(beta)
    converged = False
    separated = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(X @ beta + off)
        score = X.T @ (s - w * mu)
        free = np.abs(beta) < COEF_CAP - 1e-12
        free |= np.sign(score) != np.sign(beta)  # allowed to move inward
        if np.linalg.norm(score[free]) < tol:
            converged = True
            break
        info = (X * (w * mu * (1.0 - mu))[:, None]).T @ X
        step = np.zeros(p)
        idx = np.flatnonzero(free)
        try:
            step[idx] = np.linalg.solve(info[np.ix_(idx, idx)], score[idx])
        except np.linalg.LinAlgError:
            step[idx] = np.linalg.lstsq(info[np.ix_(idx, idx)], score[idx], rcond=None)[0]
        scale = 1.0
        while True:
            cand = np.clip(beta + scale * step, -COEF_CAP, COEF_CAP)
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)) or scale < 1e-10:
                break
            scale *= 0.5
        moved = np.max(np.abs(cand - beta))
        beta, ll = cand, ll_new
        if np.any(np.abs(beta) >= COEF_CAP - 1e-12):
            separated = True
        if moved < 1e-14:
            converged = separated
            break
    return LogisticFit(beta, converged, separated, it, ll)
