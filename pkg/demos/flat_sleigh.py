"""
The flat sleigh turns on a circle
=================================

A knife edge on a flat floor cannot slide sideways. Started with forward
speed 1 and turning rate omega, the contact point draws a circle of radius
1/omega. We integrate the equations of motion and compare.
"""

import numpy as np

from roughnh.dynamics import constraint_drift, energy_drift, integrate, pointwise_multipliers
from roughnh.sleigh import build_sleigh_system, sleigh_circle

sleigh = build_sleigh_system(K=0)

# one full turn at omega = 2: tau = pi, a whole number of dt = 1e-3 steps
omega = 2 * np.pi / 3.142
traj = integrate(sleigh, [0.0, 0.0, 0.0], [1.0, 0.0, omega], tau=3.142, dt=1e-3)

exact, _, _ = sleigh_circle(traj.times, omega=omega)
print("max position error     ", np.abs(traj.x - exact).max())
print("energy drift           ", energy_drift(traj))
print("constraint residual    ", constraint_drift(traj))

###############################################################################
# The reaction force keeps the sleigh on its circle. Its size is the
# centripetal force -omega for unit mass and speed.

lam = pointwise_multipliers(traj)
print("multiplier range       ", lam.min(), lam.max())

###############################################################################
# Switching off the velocity projection leaves the constraint to RK4 alone.
# It still holds to about 1e-12 here.

free = integrate(sleigh, [0.0, 0.0, 0.0], [1.0, 0.0, omega], tau=3.142, dt=1e-3, stabilize=False)
print("without projection     ", constraint_drift(free))
