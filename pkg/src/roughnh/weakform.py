"""Weak-form residuals and least-squares multiplier reconstruction along trajectories.

For a trajectory ``x(t)`` on ``[0, tau]`` and a test function ``psi`` with
``psi(0) = 0`` the signed functional is

    F(psi) = int (dL/dx . psi + dL/dv . psi') dt - dL/dv(tau) . psi(tau),

which vanishes on every admissible ``psi`` (``a(x(t)) psi(t) = 0``) for a weak
solution. For arbitrary ``psi`` an integration by parts gives
``F(psi) = -int lam . a psi dt``; :func:`reconstruct_multipliers` fits ``gamma``
to ``-F(psi) = int gamma . a psi dt`` so that ``gamma`` carries the same sign as
the multipliers of :func:`roughnh.dynamics.compute_multipliers`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import integrate as spi

from .errors import GridMismatch, InvalidParameter, PivotInconsistent, RankDeficient, TooFewNodes
from .model import block_det, choose_pivot, pivot_candidates


def quadrature(samples, dt):
    """Composite Simpson over a uniform grid; trapezoid when the node count is even.

    Integrates along the first axis, so vector-valued samples are allowed.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 3:
        raise TooFewNodes("quadrature needs at least 3 nodes")
    if samples.shape[0] % 2 == 1:
        return spi.simpson(samples, dx=dt, axis=0)
    return spi.trapezoid(samples, dx=dt, axis=0)


def derivative_4th(values, dt):
    """Fourth-order finite differences along axis 0: central inside, one-sided near the ends."""
    f = np.asarray(values, dtype=float)
    if f.shape[0] < 5:
        raise TooFewNodes("fourth-order differences need at least 5 nodes")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * dt)
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * dt)
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * dt)
    d[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * dt)
    d[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * dt)
    return d


@dataclass
class TestFunction:
    values: np.ndarray
    derivs: np.ndarray
    admissible: bool
    pivot: np.ndarray | None = None

    __test__ = False  # not a pytest class


@dataclass
class MultiplierTrack:
    """Reconstructed ``gamma`` sampled at the trajectory nodes."""

    times: np.ndarray
    gamma: np.ndarray
    l2_norm: float
    coefficients: np.ndarray
    knots: np.ndarray
    fit_residual: float
    rank: int
    info: dict = field(default_factory=dict)


def l2_norm(samples, dt):
    """Composite-trapezoid ``L^2`` norm of (vector) samples on a uniform grid."""
    s = np.asarray(samples, dtype=float)
    sq = s**2 if s.ndim == 1 else np.sum(s**2, axis=tuple(range(1, s.ndim)))
    return float(np.sqrt(spi.trapezoid(sq, dx=dt)))


def _system(traj, system):
    system = traj.system if system is None else system
    if system is None:
        raise InvalidParameter("trajectory carries no system; pass one explicitly")
    return system


def _eval_psi_hat(psi_hat, t, k):
    if callable(psi_hat):
        out = np.asarray(psi_hat(t), dtype=float)
    else:
        out = np.stack([np.asarray(f(t), dtype=float) * np.ones_like(t) for f in psi_hat], axis=-1)
    out = out.reshape(len(t), k)
    return out


def common_pivot(a_nodes, rho):
    """One column split usable at every node, preferring the pivot of the first node."""
    cands = [choose_pivot(a_nodes[0])]
    for a in a_nodes:
        for c in pivot_candidates(a):
            if not any(np.array_equal(c, d) for d in cands):
                cands.append(c)
    for cand in cands:
        if all(block_det(a, cand) >= rho for a in a_nodes):
            return cand
    raise PivotInconsistent("no single constraint pivot block stays invertible along the trajectory")


def admissible_test(traj, psi_hat, system=None, rho=None):
    """Admissible test function ``psi = (B(x) psi_hat, psi_hat)`` in pivot coordinates.

    ``psi_hat`` is either a callable ``t -> (N+1, m-n)`` array or a sequence of
    ``m - n`` scalar callables; every component must vanish at ``t = 0``.
    """
    system = _system(traj, system)
    m, n = system.m, system.n
    rho = system.rho if rho is None else rho
    ph = _eval_psi_hat(psi_hat, traj.times, m - n)
    if np.any(np.abs(ph[0]) > 1e-14):
        raise InvalidParameter("psi_hat must vanish at t = 0")
    a_nodes = system.constraint(traj.x)
    piv = common_pivot(a_nodes, rho)
    A = a_nodes[:, :, piv[:n]]
    Q = a_nodes[:, :, piv[n:]]
    tilde = -np.linalg.solve(A, np.einsum("jkl,jl->jk", Q, ph)[..., None])[..., 0]
    psi = np.zeros((len(traj.times), m))
    psi[:, piv[:n]] = tilde
    psi[:, piv[n:]] = ph
    psi[0] = 0.0
    return TestFunction(values=psi, derivs=derivative_4th(psi, traj.dt), admissible=True, pivot=piv)


def plain_test(traj, values, derivs=None):
    """Wrap sampled ``psi`` values (not necessarily admissible) as a test function."""
    values = np.asarray(values, dtype=float)
    if derivs is None:
        derivs = derivative_4th(values, traj.dt)
    return TestFunction(values=values, derivs=np.asarray(derivs, dtype=float), admissible=False)


@dataclass
class LagrangianSamples:
    dLdx: np.ndarray
    dLdv: np.ndarray


def lagrangian_samples(traj, system=None):
    """``dL/dx`` and ``dL/dv`` at every node of the trajectory."""
    system = _system(traj, system)
    G, dG = system.metric_and_grad(traj.x)
    _, gV = system.potential_and_grad(traj.x)
    dLdx = 0.5 * np.einsum("ji,jikl,jk->jl", traj.v, dG, traj.v) - gV
    dLdv = np.einsum("jik,jk->ji", G, traj.v)
    return LagrangianSamples(dLdx, dLdv)


def _check_grid(traj, psi):
    if psi.values.shape != (len(traj.times), traj.x.shape[1]):
        raise GridMismatch(f"test function shape {psi.values.shape} does not match the trajectory grid")


def weak_functional(traj, psi, system=None, samples=None):
    """Signed weak-form functional ``F(psi)``."""
    _check_grid(traj, psi)
    L = lagrangian_samples(traj, system) if samples is None else samples
    integrand = np.sum(L.dLdx * psi.values, axis=1) + np.sum(L.dLdv * psi.derivs, axis=1)
    return float(quadrature(integrand, traj.dt) - L.dLdv[-1] @ psi.values[-1])


def h1_norm(psi, dt):
    sq = np.sum(psi.values**2, axis=1) + np.sum(psi.derivs**2, axis=1)
    return float(np.sqrt(quadrature(sq, dt)))


def weak_residual(traj, psi, system=None, samples=None):
    """``|F(psi)| / (1 + ||psi||_H1)`` for an admissible test function."""
    if not psi.admissible:
        raise InvalidParameter("weak_residual needs an admissible test function")
    value = weak_functional(traj, psi, system, samples)
    return abs(value) / (1.0 + h1_norm(psi, traj.dt))


def random_polynomial_psi_hat(rng, k, degree=4, tau=1.0):
    """Random polynomials in ``t/tau`` without constant term, ``k`` components."""
    coefs = rng.normal(size=(k, degree))

    def psi_hat(t):
        s = np.asarray(t, dtype=float)[:, None] / tau
        powers = s ** np.arange(1, degree + 1)
        return powers @ coefs.T

    psi_hat.coefficients = coefs
    return psi_hat


def _knot_indices(N, count):
    """``count`` knots from 0 to N, interior ones on even grid indices."""
    idx = 2 * np.round(np.linspace(0, N, count) / 2.0).astype(int)
    idx[-1] = N
    idx = np.unique(np.clip(idx, 0, N))
    if len(idx) < count:
        raise InvalidParameter(f"grid of {N + 1} nodes is too coarse for {count} knots")
    return idx


def hat_basis(times, knots):
    """Piecewise-linear nodal basis on ``knots`` sampled at ``times``, shape ``(len(times), len(knots))``."""
    eye = np.eye(len(knots))
    return np.stack([np.interp(times, knots, eye[i]) for i in range(len(knots))], axis=-1)


def reconstruction_tests(traj, degree):
    """Non-admissible family ``(t/tau)**p e_r`` with exact derivatives."""
    tau = traj.tau
    s = traj.times / tau
    m = traj.x.shape[1]
    out = []
    for p in range(1, degree + 1):
        val = s**p
        der = p * s ** (p - 1) / tau
        for r in range(m):
            values = np.zeros((len(s), m))
            derivs = np.zeros((len(s), m))
            values[:, r] = val
            derivs[:, r] = der
            out.append(TestFunction(values, derivs, admissible=False))
    return out


def reconstruct_multipliers(traj, basis_size, system=None, n_knots=None, extra_tests=(), rcond=1e-12):
    """Least-squares ``gamma`` in a piecewise-linear basis matching the weak identity.

    Unknowns: nodal values of ``gamma`` on ``n_knots`` (default ``basis_size``)
    knots. Equations: one per test function ``(t/tau)**p e_r``, ``p <=
    basis_size``, plus any ``extra_tests``.
    """
    system = _system(traj, system)
    n = system.n
    n_knots = basis_size if n_knots is None else n_knots
    if basis_size < n:
        raise InvalidParameter("basis_size must be at least n")
    if n_knots < 2:
        raise InvalidParameter("need at least two knots")
    N = len(traj.times) - 1
    idx = _knot_indices(N, n_knots)
    knots = traj.times[idx]
    phi = hat_basis(traj.times, knots)
    a_nodes = system.constraint(traj.x)
    L = lagrangian_samples(traj, system)
    tests = list(reconstruction_tests(traj, basis_size)) + list(extra_tests)
    rows, rhs = [], []
    for psi in tests:
        a_psi = np.einsum("jkl,jl->jk", a_nodes, psi.values)
        # column (i, k): int phi_i(t) (a psi)_k dt
        integrand = phi[:, :, None] * a_psi[:, None, :]
        rows.append(quadrature(integrand, traj.dt).ravel())
        rhs.append(-weak_functional(traj, psi, system, L))
    M = np.array(rows)
    y = np.array(rhs)
    coef, _, rank, sv = scipy.linalg.lstsq(M, y, cond=rcond, lapack_driver="gelsd")
    if rank < M.shape[1]:
        raise RankDeficient(f"least-squares matrix has rank {rank} < {M.shape[1]} unknowns")
    coef = coef.reshape(len(knots), n)
    gamma = phi @ coef
    resid = float(np.linalg.norm(M @ coef.ravel() - y))
    return MultiplierTrack(
        times=traj.times,
        gamma=gamma,
        l2_norm=l2_norm(gamma, traj.dt),
        coefficients=coef,
        knots=knots,
        fit_residual=resid,
        rank=int(rank),
        info=dict(
            basis="piecewise-linear hats",
            n_knots=int(len(knots)),
            test_family=f"(t/tau)^p e_r, p=1..{basis_size}",
            n_tests=len(tests),
            singular_values=[float(x) for x in sv],
            rhs_norm=float(np.linalg.norm(y)),
        ),
    )
