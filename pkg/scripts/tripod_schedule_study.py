#!/usr/bin/env python3
"""Region-time balance on the tripod as a function of the step schedule.

The time each region receives converges to the unique weights solving
lam1*g1 + lam2*g2 + lam3*g3 = 0 (here exactly one third each), but the
convergence is in elapsed time t_N, not iterate count.  With eps_i = c/i the
elapsed time grows like c*ln(N), so the ~0.9 time units spent travelling from
(0.3, -0.7) to the apex still dominate after a million iterates; with
eps_i = c/sqrt(i) the same million iterates cover ~200 time units and the
fractions settle to thirds.

Usage: python scripts/tripod_schedule_study.py [N]
"""

import sys

import numpy as np

import subosc


def study(n_steps: int) -> None:
    oracle = subosc.tripod()
    regions = subosc.polyhedral_regions(oracle)
    print(f"tripod from (0.3, -0.7), c = 0.1, {n_steps} iterates")
    print(f"{'p':>5} {'t_N':>9} {'lam1':>7} {'lam2':>7} {'lam3':>7} "
          f"{'residual':>9} {'|x_N|':>10}")
    for p in (1.0, 0.75, 0.5):
        traj = subosc.run(oracle, [0.3, -0.7], subosc.StepSchedule(0.1, p),
                          subosc.SelectionPolicy("first-active", seed=1), n_steps)
        occ = subosc.region_occupation(traj, regions)
        lam = occ.final_fractions()
        print(f"{p:5.2f} {traj.times[-1]:9.2f} {lam[0]:7.3f} {lam[1]:7.3f} "
              f"{lam[2]:7.3f} {occ.final_residual:9.4f} "
              f"{np.linalg.norm(traj.points[-1]):10.2e}")


if __name__ == "__main__":
    study(int(sys.argv[1]) if len(sys.argv) > 1 else 10**6)
