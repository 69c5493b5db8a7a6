"""Nonholonomic mechanical systems with rough coefficients."""

__version__ = "0.1.0"

from .convergence import c0_distance, c1_distance, c1alpha_distance, convergence_study, holder_seminorm
from .dynamics import (
    Trajectory,
    acceleration,
    compute_multipliers,
    generalized_force,
    integrate,
    pointwise_multipliers,
    project_velocity,
)
from .errors import *  # noqa: F401,F403
from .model import Field, FieldSample, MechanicalSystem, PolynomialField, evaluate, make_system
from .mollify import epsilon_schedule, mollify_field, mollify_report, mollify_system
from .sleigh import build_sleigh_system, sleigh_circle
from .weakform import admissible_test, reconstruct_multipliers, weak_functional, weak_residual
