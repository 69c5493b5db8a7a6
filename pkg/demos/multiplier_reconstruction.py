"""
Recovering the reaction force from a trajectory
===============================================

A recorded motion is enough to estimate the multiplier. Test functions that
violate the constraint pick up exactly the reaction term, and a least-squares
fit over hat functions turns those numbers into a curve gamma(t).
"""

import numpy as np

from roughnh.dynamics import integrate, pointwise_multipliers
from roughnh.model import Field, MechanicalSystem, PolynomialField
from roughnh.sleigh import build_sleigh_system
from roughnh.weakform import admissible_test, l2_norm, random_polynomial_psi_hat, reconstruct_multipliers, weak_residual

# a particle that falls along x1 but is not allowed to move in that direction
gravity = MechanicalSystem(
    m=2,
    n=1,
    lower=[-5.0, -5.0],
    upper=[5.0, 5.0],
    metric=Field.constant(np.eye(2)),
    potential=PolynomialField([[1.0, 1, 0]], 2, ()),
    constraint=Field.constant([[1.0, 0.0]]),
    h=10.0,
)
traj = integrate(gravity, [0.0, 0.0], [0.0, 1.0], tau=1.0, dt=0.01)
track = reconstruct_multipliers(traj, 4)
print("gamma on the line, should be 1:", track.gamma[::25, 0])
print("L2 error                        ", l2_norm(track.gamma - 1.0, traj.dt))

###############################################################################
# The same fit on the flat sleigh, checked against the multiplier computed
# pointwise from the equations of motion.

sleigh = build_sleigh_system(K=0)
traj = integrate(sleigh, [0.0, 0.0, 0.3], [np.cos(0.3), np.sin(0.3), 1.0], tau=1.0, dt=1e-3)
track = reconstruct_multipliers(traj, 4)
print("sleigh L2 error                 ", l2_norm(track.gamma - pointwise_multipliers(traj), traj.dt))

###############################################################################
# Admissible test functions see no reaction force at all, so the weak-form
# residual of a good trajectory is tiny.

rng = np.random.default_rng(0)
res = [weak_residual(traj, admissible_test(traj, random_polynomial_psi_hat(rng, 2, 4, traj.tau))) for _ in range(10)]
print("largest weak residual           ", max(res))
