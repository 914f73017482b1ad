"""Build a joint distribution with a known nonignorable mechanism, hand its
expected observed table to the closed-form solvers and to EM, and compare
what comes back with the truth.
"""
import numpy as np

from subgroup_causal import em_fit, identify_m1, identify_m2, identify_m3_joint, identify_m4
from subgroup_causal.simulate import simulation_dgp

SOLVERS = {"M1": identify_m1, "M2": identify_m2, "M3": identify_m3_joint, "M4": identify_m4}


def main():
    for mech, solve in SOLVERS.items():
        truth = simulation_dgp(mech).joint()
        table = truth.expected_table(1e6)
        closed = solve(table)
        fit = em_fit(table, mech)
        err = np.nanmax(np.abs(closed.prob_missing() - truth.prob_missing()))
        print(f"{mech}: closed-form max error {err:.1e}, "
              f"EM vs closed form TV {fit.joint.total_variation(closed):.1e} "
              f"after {fit.iterations} iterations")


if __name__ == "__main__":
    main()
