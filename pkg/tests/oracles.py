"""Independent reference computations used by the tests.

Nothing here calls the EM, Gibbs or closed-form code under test.
"""
import numpy as np
from scipy.optimize import minimize
from scipy.special import log_expit, logsumexp


def direct_loglik(theta, n_obs, n_mis, mechanism):
    """Observed-data log-likelihood of the randomized 10-parameter model.

    ``theta`` holds logits: P(X=1), P(T=1), P(Y=1|t,x) (4), and 4 missingness
    parameters whose meaning depends on the mechanism.
    """
    lx, lt = theta[0], theta[1]
    ly = theta[2:6].reshape(2, 2)  # [t, x]
    lm = theta[6:10]
    log_px = np.array([log_expit(-lx), log_expit(lx)])
    log_pt = np.array([log_expit(-lt), log_expit(lt)])
    log_py = np.stack([log_expit(-ly), log_expit(ly)], axis=-1)  # [t, x, y]
    t, x, y = np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij")
    if mechanism == "M1":
        eta = lm.reshape(2, 2)[t, y]
    elif mechanism == "M2":
        eta = lm.reshape(2, 2)[t, x]
    elif mechanism == "M3":
        eta = lm.reshape(2, 2)[x, y]
    else:
        eta = lm[0] + lm[1] * t + lm[2] * x + lm[3] * y
    base = log_pt[:, None, None] + log_px[None, :, None] + log_py
    log_obs = base + log_expit(-eta)
    log_mis = logsumexp(base + log_expit(eta), axis=1)
    return float(np.sum(n_obs * log_obs) + np.sum(n_mis * log_mis))


def brute_force_max(n_obs, n_mis, mechanism, starts=12, seed=0, bound=25.0):
    """Best of several bounded quasi-Newton runs from random logit starts."""
    rng = np.random.default_rng(seed)
    best = -np.inf
    f = lambda th: -direct_loglik(th, n_obs, n_mis, mechanism)
    for _ in range(starts):
        th0 = rng.normal(0, 1.5, 10)
        res = minimize(f, th0, method="L-BFGS-B", bounds=[(-bound, bound)] * 10,
                       options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-10})
        # restart from the optimum with tighter tolerances
        res2 = minimize(f, res.x, method="L-BFGS-B", bounds=[(-bound, bound)] * 10,
                        options={"maxiter": 5000, "ftol": 1e-16, "gtol": 1e-12})
        best = max(best, -res.fun, -res2.fun)
    return best
