"""Smooth approximants of rough fields by convolution with a bump kernel.

A mollified field is ``f_eps(x) = sum_q W_q f(clamp(x - y_q))`` over a tensor
Gauss-Legendre grid ``y_q`` in ``[-eps, eps]**m``; its derivative uses the
differentiated kernel, ``sum_q D_q f(clamp(x - y_q))``. The weights are
non-negative and sum to one, so every smoothed value is a convex combination
of field values within distance ``eps``. Two consequences are used by tests:
``|f_eps - f| <= Lip(f) * eps`` and ellipticity bounds of a metric carry over
unchanged for every ``eps``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import AnchorViolation, InvalidParameter, LeftSublevel, QuadratureUnderflow, ZeroVelocity
from .model import Field, MechanicalSystem, check_domain

MASS_TOL = 1e-8


def bump_kernel(r2):
    """Unnormalised ``exp(-1/(1-r^2))`` on the unit ball, as a function of ``r^2``."""
    r2 = np.asarray(r2, dtype=float)
    inside = r2 < 1.0
    safe = np.where(inside, r2, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe)), 0.0)


def kernel_mass(m):
    """Integral of the unit bump over ``R^m``."""
    sphere = 2.0 * np.pi ** (m / 2) / special.gamma(m / 2)
    radial, _ = integrate.quad(lambda r: r ** (m - 1) * np.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    return sphere * radial


@dataclass(frozen=True)
class KernelRule:
    """Discrete kernel: offsets ``y`` with value weights ``W`` and derivative weights ``D``."""

    offsets: np.ndarray
    W: np.ndarray
    D: np.ndarray
    mass_error: float


def kernel_rule(m, epsilon, quad_points):
    if epsilon <= 0:
        raise InvalidParameter("epsilon must be positive")
    if quad_points < 2:
        raise InvalidParameter("quad_points must be at least 2")
    t, w = np.polynomial.legendre.leggauss(quad_points)
    grids = np.meshgrid(*([t] * m), indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=-1)
    wq = np.prod(np.stack(np.meshgrid(*([w] * m), indexing="ij"), -1).reshape(-1, m), axis=-1)
    r2 = np.sum(u**2, axis=-1)
    rho = bump_kernel(r2)
    keep = rho > 0
    u, wq, r2, rho = u[keep], wq[keep], r2[keep], rho[keep]
    raw = wq * rho
    total = raw.sum()
    if not np.isfinite(total) or total <= 0:
        raise QuadratureUnderflow("kernel weights vanished")
    W = raw / total
    if abs(W.sum() - 1.0) > MASS_TOL:
        raise QuadratureUnderflow(f"kernel mass {W.sum()!r} deviates from 1 by more than {MASS_TOL:g}")
    # d rho / d y in unit coordinates; divide by eps for physical offsets
    D = (raw * (-2.0 / (1.0 - r2) ** 2))[:, None] * u / total
    # first-moment normalisation: derivative of a linear field is exact
    moment = -np.sum(D * u, axis=0)
    D = D / moment / epsilon
    mass_error = total / kernel_mass(m) - 1.0
    return KernelRule(offsets=epsilon * u, W=W, D=D, mass_error=float(mass_error))


class MollifiedField(Field):
    """``f * rho_eps`` of a base :class:`Field`, extended beyond the box by clamping."""

    def __init__(self, base, epsilon, quad_points, lower, upper):
        self.base = base
        self.epsilon = float(epsilon)
        self.quad_points = int(quad_points)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.rule = kernel_rule(self.lower.size, self.epsilon, self.quad_points)
        super().__init__(self._value, self._grad, base.shape)

    def _samples(self, x):
        pts = np.clip(x[..., None, :] - self.rule.offsets, self.lower, self.upper)
        return self.base(pts)

    def _contract_value(self, vals, nb):
        return np.tensordot(np.moveaxis(vals, nb, -1), self.rule.W, axes=([-1], [0]))

    def _contract_grad(self, vals, nb):
        return np.tensordot(np.moveaxis(vals, nb, -1), self.rule.D, axes=([-1], [0]))

    def _value(self, x):
        x = np.asarray(x, dtype=float)
        return self._contract_value(self._samples(x), x.ndim - 1)

    def _grad(self, x):
        x = np.asarray(x, dtype=float)
        return self._contract_grad(self._samples(x), x.ndim - 1)

    def value_and_grad(self, x, h_fd=None):
        x = np.asarray(x, dtype=float)
        vals = self._samples(x)
        nb = x.ndim - 1
        return self._contract_value(vals, nb), self._contract_grad(vals, nb)


def mollify_field(field, epsilon, quad_points=9, lower=None, upper=None, m=None):
    """Smooth ``field`` at radius ``epsilon``.

    Without a box the field is sampled unclamped; ``m`` is then required.
    """
    if lower is None:
        if m is None:
            raise InvalidParameter("pass either a domain box or the dimension m")
        lower, upper = np.full(m, -np.inf), np.full(m, np.inf)
    return MollifiedField(field, epsilon, quad_points, lower, upper)


class _ShiftedField(Field):
    """A field plus a constant matrix; the derivative is unchanged."""

    def __init__(self, inner, shift):
        self.inner = inner
        self.shift = np.asarray(shift, dtype=float)
        super().__init__(lambda x: inner(x) + self.shift, inner.grad, inner.shape)

    def value_and_grad(self, x, h_fd=None):
        val, grad = self.inner.value_and_grad(x)
        return val + self.shift, grad


def anchor_correction(a_star_x0, v):
    """Constant correction ``b`` with ``(a_star_x0 + b) v = 0``.

    Only the column of the largest ``|v_j|`` is non-zero.
    """
    a_star_x0 = np.atleast_2d(np.asarray(a_star_x0, dtype=float))
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ZeroVelocity("anchor correction needs a non-zero velocity")
    j = int(np.argmax(np.abs(v)))
    b = np.zeros_like(a_star_x0)
    b[:, j] = -(a_star_x0 @ v) / v[j]
    return b


@dataclass(frozen=True, eq=False)
class MollifiedSystem(MechanicalSystem):
    base: MechanicalSystem | None = None
    epsilon: float = 0.0
    anchor_x0: np.ndarray | None = None
    anchor_v: np.ndarray | None = None
    b: np.ndarray | None = None
    quad_points: int = 9

    def potential_and_grad(self, x):
        return self.base.potential_and_grad(x)


def mollify_system(system, epsilon, x0, v, quad_points=9, anchor_tol=1e-8):
    """Smooth metric and constraints of ``system``; anchor ``a_eps(x0) v = 0`` exactly.

    The potential is left as is.
    """
    x0 = check_domain(system, x0)
    v = np.asarray(v, dtype=float)
    base_res = system.constraint(x0) @ v
    if np.linalg.norm(base_res) > anchor_tol:
        raise AnchorViolation(f"|a(x0) v| = {np.linalg.norm(base_res):.3e} exceeds {anchor_tol:g}")
    if system.potential(x0) >= system.h:
        raise LeftSublevel("x0 is not in the sublevel set V < h")
    G_eps = MollifiedField(system.metric, epsilon, quad_points, system.lower, system.upper)
    a_star = MollifiedField(system.constraint, epsilon, quad_points, system.lower, system.upper)
    if np.any(v):
        b = anchor_correction(a_star(x0), v)
    else:
        b = np.zeros((system.n, system.m))
    return MollifiedSystem(
        m=system.m,
        n=system.n,
        lower=system.lower,
        upper=system.upper,
        metric=G_eps,
        potential=system.potential,
        constraint=_ShiftedField(a_star, b),
        h=system.h,
        derivative_mode="analytic",
        h_fd=system.h_fd,
        c1=system.c1,
        c2=system.c2,
        rho=system.rho,
        name=f"{system.name}~eps={epsilon:g}",
        params=dict(system.params),
        base=system,
        epsilon=float(epsilon),
        anchor_x0=x0.copy(),
        anchor_v=v.copy(),
        b=b,
        quad_points=int(quad_points),
    )


def epsilon_schedule(system, stages, eps0=None):
    """Halving schedule ``eps0 * 2**-k``; ``eps0`` defaults to a tenth of the box diameter."""
    if eps0 is None:
        eps0 = system.diameter / 10.0
    return [eps0 * 0.5**k for k in range(stages)]


def difference_quotient_bound(field, points, step, lower=None, upper=None):
    """Largest sampled ``|f(x + step*e_l) - f(x)| / step`` over entries, axes and points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    base = field(points)
    best = 0.0
    for l in range(points.shape[-1]):
        shifted = points.copy()
        shifted[:, l] += step
        if upper is not None:
            shifted[:, l] = np.minimum(shifted[:, l], upper[l])
        dq = np.abs(field(shifted) - base) / np.maximum(shifted[:, l] - points[:, l], 1e-300)[
            (slice(None),) + (None,) * len(field.shape)
        ]
        best = max(best, float(np.max(dq)))
    return best


def sup_deviation(f, g, points):
    return float(np.max(np.abs(f(points) - g(points))))


def sup_grad(field, points):
    _, grad = field.value_and_grad(points)
    return float(np.max(np.abs(grad)))


def mollify_report(system, eps_schedule, x0, v, points, quad_points=9, dq_step=1e-4):
    """Per-stage diagnostics of the smoothing sequence, as a JSON-ready dict."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    stages = []
    for eps in eps_schedule:
        ms = mollify_system(system, eps, x0, v, quad_points)
        a0 = ms.constraint(ms.anchor_x0)
        stages.append(
            dict(
                epsilon=float(eps),
                sup_dev_G=sup_deviation(ms.metric, system.metric, points),
                sup_dev_a=sup_deviation(ms.constraint, system.constraint, points),
                sup_dG=sup_grad(ms.metric, points),
                sup_da=sup_grad(ms.constraint, points),
                b_norm=float(np.linalg.norm(ms.b)),
                anchor_residual=float(np.max(np.abs(a0 @ ms.anchor_v))),
                anchor_scale=float(np.linalg.norm(a0) * np.linalg.norm(ms.anchor_v)),
                kernel_mass_error=ms.metric.rule.mass_error,
            )
        )
    return dict(
        quad_points=int(quad_points),
        n_sample_points=int(points.shape[0]),
        base_dq_bound_G=difference_quotient_bound(system.metric, points, dq_step, upper=system.upper),
        base_dq_bound_a=difference_quotient_bound(system.constraint, points, dq_step, upper=system.upper),
        dq_step=dq_step,
        stages=stages,
    )
