"""Random parameter draws for property and round-trip tests."""
import numpy as np

from subgroup_causal import (JointDistribution, MechanismSpec, ObservedTable, SubgroupCausalError,
                             identify_m1, identify_m2, identify_m3_joint, identify_m4)
from subgroup_causal.tables import _compose

SOLVERS = {"M1": identify_m1, "M2": identify_m2, "M3": identify_m3_joint, "M4": identify_m4}

# Draws whose recovered missingness moves by more than this much per unit
# change in the observed proportions are weakly identified; EM crawls there.
MAX_SENSITIVITY = 50.0


def random_spec(rng, mechanism):
    if mechanism == "M4":
        coef = rng.uniform(-1.0, 1.0, 4)
        coef[0] = rng.uniform(-2.5, -0.5)
        return MechanismSpec("M4", coef=coef)
    return MechanismSpec(mechanism, table=rng.uniform(0.05, 0.4, (2, 2)))


def random_joint(rng, mechanism, randomized=False):
    """Binary T, X, Y joint with the given missingness and interior factors."""
    px = rng.uniform(0.2, 0.8)
    pt1 = np.full(2, rng.uniform(0.2, 0.8)) if randomized else rng.uniform(0.2, 0.8, 2)
    q = rng.uniform(0.1, 0.9, (2, 2))
    py = np.stack([1.0 - q, q], axis=-1)
    pm = random_spec(rng, mechanism).prob_missing(2, 2)
    return JointDistribution(_compose(np.array([1.0 - px, px]), pt1, py, pm))


def solver_sensitivity(mechanism, table, h=1e-7):
    """Spectral norm of the finite-difference Jacobian of the recovered
    ``P(M=1|t,x,y)`` with respect to the observed cell proportions."""
    solve = SOLVERS[mechanism]
    p = np.concatenate([table.n_obs.ravel(), table.n_mis.ravel()]) / table.total
    base = solve(table).prob_missing().ravel()
    cols = []
    for i in range(p.size):
        q = p.copy()
        q[i] += h
        moved = solve(ObservedTable(q[:8].reshape(2, 2, 2), q[8:].reshape(2, 2)))
        cols.append((moved.prob_missing().ravel() - base) / h)
    return float(np.linalg.norm(np.array(cols), 2))


def identified_draws(mechanism, count, seed, n=1e6):
    """Yield ``(joint, table)`` pairs where the closed form applies and is well conditioned."""
    rng = np.random.default_rng(seed)
    found = 0
    while found < count:
        joint = random_joint(rng, mechanism)
        table = joint.expected_table(n)
        try:
            if solver_sensitivity(mechanism, table) > MAX_SENSITIVITY:
                continue
        except SubgroupCausalError:
            continue
        found += 1
        yield joint, table
