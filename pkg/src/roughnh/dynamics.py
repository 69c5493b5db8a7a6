"""Lagrange-multiplier dynamics and fixed-step RK4 integration.

Along a motion ``G x'' = a^T lam + F`` with the non-multiplier force

    F_j = 1/2 v^T (dG/dx_j) v - dV/dx_j - ((v^l dG/dx_l) v)_j

and ``lam`` fixed by differentiating ``a(x) x' = 0`` once in time:

    (a G^-1 a^T) lam = -(v^l da/dx_l) v - a G^-1 F.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import AnchorViolation, GridMismatch, InvalidParameter, LeftSublevel, SingularGram, StepTooLarge
from .model import FieldSample, check_domain, check_finite

GRAM_COND_MAX = 1e12


def generalized_force(s, v):
    v = np.asarray(v, dtype=float)
    half_quad = 0.5 * np.einsum("i,ijl,j->l", v, s.dG, v)
    transport = np.einsum("ijl,l,j->i", s.dG, v, v)
    return half_quad - s.gradV - transport


def _gram(s):
    Ginv_aT = s.Ginv @ s.a.T
    gram = s.a @ Ginv_aT
    return gram, Ginv_aT


def _gram_solve(gram, rhs):
    if gram.shape == (1, 1):
        g = gram[0, 0]
        if not g > 0:
            raise SingularGram("Gram matrix a G^-1 a^T is not positive")
        return rhs / g
    w = np.linalg.eigvalsh(gram)
    if w[0] <= 0 or w[-1] / w[0] > GRAM_COND_MAX:
        raise SingularGram(f"Gram matrix condition number {w[-1] / max(w[0], 1e-300):.3e} exceeds {GRAM_COND_MAX:g}")
    L = np.linalg.cholesky(gram)
    return np.linalg.solve(L.T, np.linalg.solve(L, rhs))


def compute_multipliers(s, v, force=None):
    v = np.asarray(v, dtype=float)
    F = generalized_force(s, v) if force is None else force
    gram, Ginv_aT = _gram(s)
    adot_v = np.einsum("kjl,l,j->k", s.da, v, v)
    rhs = -adot_v - Ginv_aT.T @ F
    return _gram_solve(gram, rhs)


def acceleration(s, v):
    """Resolved second derivative ``G^-1 (a^T lam + F)``."""
    F = generalized_force(s, v)
    lam = compute_multipliers(s, v, force=F)
    return s.Ginv @ (s.a.T @ lam + F)


def project_velocity(s, v):
    """``G``-orthogonal projection of ``v`` onto ``ker a(x)``."""
    v = np.asarray(v, dtype=float)
    gram, Ginv_aT = _gram(s)
    return v - Ginv_aT @ _gram_solve(gram, s.a @ v)


@dataclass
class Trajectory:
    """Samples of a motion on the uniform grid ``t_j = j*dt``."""

    dt: float
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    acc: np.ndarray
    energy: np.ndarray
    cres: np.ndarray
    h_prime: float
    system: object = field(default=None, repr=False)
    stats: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.times) - 1

    @property
    def tau(self):
        return float(self.times[-1])

    def same_grid(self, other):
        return self.times.shape == other.times.shape and np.array_equal(self.times, other.times)


def _sample(system, x):
    G, dG, V, gV, a, da = system.fields(x)
    return FieldSample(x, G, dG, V, gV, a, da)


def _kinetic(G, v):
    return 0.5 * float(v @ G @ v)


def integrate(system, x0, v0, tau, dt, stabilize=True, anchor_tol=1e-10, check_step=True):
    """Classical RK4 on ``(x, v)`` with optional velocity projection after every step.

    Energy is never rescaled; its drift is recorded in the returned trajectory.
    """
    x0 = check_domain(system, x0)
    v0 = np.asarray(v0, dtype=float)
    check_finite(v0)
    if tau <= 0 or dt <= 0:
        raise InvalidParameter("tau and dt must be positive")
    steps = int(round(tau / dt))
    if steps < 1 or abs(steps * dt - tau) > 1e-9 * tau:
        raise InvalidParameter(f"dt={dt!r} does not divide tau={tau!r}")
    s0 = _sample(system, x0)
    if np.linalg.norm(s0.a @ v0) > anchor_tol:
        raise AnchorViolation(f"|a(x0) v0| = {np.linalg.norm(s0.a @ v0):.3e} exceeds {anchor_tol:g}")
    h_prime = _kinetic(s0.G, v0) + s0.V
    if s0.V >= system.h or h_prime >= system.h:
        raise LeftSublevel(f"initial energy {h_prime!r} is not below h={system.h!r}")

    m, n = system.m, system.n
    xs = np.empty((steps + 1, m))
    vs = np.empty((steps + 1, m))
    accs = np.empty((steps + 1, m))
    H = np.empty(steps + 1)
    cres = np.empty((steps + 1, n))
    xs[0], vs[0] = x0, v0
    accs[0] = acceleration(s0, v0)
    H[0] = h_prime
    cres[0] = s0.a @ v0
    step_tol = 1e-3 * abs(h_prime) if h_prime != 0 else 1e-3

    def rhs(x, v):
        if not system.contains(x):
            check_domain(system, x)
        return acceleration(_sample(system, x), v)

    t_start = time.perf_counter()
    x, v = x0.copy(), v0.copy()
    k1v = accs[0]
    for j in range(1, steps + 1):
        k1x = v
        k2x, k2v = v + 0.5 * dt * k1v, rhs(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = v + 0.5 * dt * k2v, rhs(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = v + dt * k3v, rhs(x + dt * k3x, v + dt * k3v)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        check_domain(system, x)
        s = _sample(system, x)
        if stabilize:
            v = project_velocity(s, v)
        if s.V >= system.h:
            raise LeftSublevel(f"V(x) = {s.V!r} >= h at t = {j * dt!r}")
        xs[j], vs[j] = x, v
        accs[j] = k1v = acceleration(s, v)
        H[j] = _kinetic(s.G, v) + s.V
        cres[j] = s.a @ v
        if check_step and abs(H[j] - H[j - 1]) > step_tol:
            raise StepTooLarge(f"energy changed by {abs(H[j] - H[j - 1]):.3e} in one step at t = {j * dt!r}")
    elapsed = time.perf_counter() - t_start
    return Trajectory(
        dt=float(dt),
        times=np.arange(steps + 1) * float(dt),
        x=xs,
        v=vs,
        acc=accs,
        energy=H,
        cres=cres,
        h_prime=h_prime,
        system=system,
        stats=dict(runtime_s=elapsed, stabilize=bool(stabilize), steps=steps),
    )


def energy_drift(traj):
    if len(traj.energy) == 0:
        raise GridMismatch("empty trajectory")
    return float(np.max(np.abs(traj.energy - traj.h_prime)))


def constraint_drift(traj):
    return float(np.max(np.linalg.norm(traj.cres, axis=1)))


def max_acceleration(traj):
    return float(np.max(np.linalg.norm(traj.acc, axis=1)))


def pointwise_multipliers(traj, system=None):
    """``lam(t_j)`` from the resolved formula at every node."""
    system = traj.system if system is None else system
    return np.array([compute_multipliers(_sample(system, x), v) for x, v in zip(traj.x, traj.v)])


def resample(traj, system):
    """Recompute accelerations, energies and residuals of ``traj`` for another system."""
    accs, H, cres = [], [], []
    for x, v in zip(traj.x, traj.v):
        s = _sample(system, x)
        accs.append(acceleration(s, v))
        H.append(_kinetic(s.G, v) + s.V)
        cres.append(s.a @ v)
    return Trajectory(traj.dt, traj.times, traj.x, traj.v, np.array(accs), np.array(H), np.array(cres), H[0], system)
