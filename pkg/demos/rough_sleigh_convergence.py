"""
Smoothing a rough floor
=======================

With K > 0 the floor carries bumps whose slopes are only Lipschitz. We
smooth the metric with shrinking radii, integrate each smoothed system
from the same start and watch how neighbouring trajectories compare.
"""

import numpy as np

from roughnh.convergence import convergence_study
from roughnh.dynamics import integrate
from roughnh.mollify import mollify_report
from roughnh.sleigh import build_sleigh_system, surface_profile

rough = build_sleigh_system(K=2)

xs = np.linspace(-1.6, 1.1, 2701)
height, slope, _ = surface_profile(xs, 2, 0.1)
print("largest height and slope:", np.abs(height).max(), np.abs(slope).max())

x0 = np.array([0.0, 0.0, 0.0])
v0 = np.array([1.0, 0.0, 1.0])
schedule = [0.08, 0.04, 0.02, 0.01, 0.005]

###############################################################################
# Every smoothed constraint still annihilates the starting velocity, and its
# derivative stays below the measured Lipschitz bound of the rough field.

base = integrate(rough, x0, v0, tau=6.28, dt=0.01)
points = base.x[:: 10]
rep = mollify_report(rough, schedule, x0, v0, points)
print("difference-quotient bound of a:", rep["base_dq_bound_a"])
for st in rep["stages"]:
    print(f"eps={st['epsilon']:<6} sup|da|={st['sup_da']:.6f} anchor={st['anchor_residual']:.1e}")

###############################################################################
# The study records C^0, C^1 and C^{1,1/2} distances between neighbours. On a
# rough floor the verdict is only advisory: the distances need not decay.

study = convergence_study(rough, x0, v0, 6.28, 0.01, schedule)
print("C1 distances     ", ["%.2e" % d for d in study.c1])
print("K-hat spread     ", study.kappa_spread)
print("verdict          ", study.verdict)
