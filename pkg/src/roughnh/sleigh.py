"""Chaplygin sleigh (knife edge at the centre of mass) on a rough surface ``z = f(x)``.

The surface is a truncated series of bumps placed at rational abscissae,

    f(x, y) = sum_k 2**-k * phi(x - x_k) * (x - x_k)**4 * cos(1 / (x - x_k)),

whose second derivative is bounded but discontinuous at every ``x_k``. The
induced kinetic metric is therefore Lipschitz with only bounded (not
continuous) first derivatives.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import InvalidParameter
from .model import Field, MechanicalSystem

SINGULAR_GAP = 1e-14


def calkin_wilf(count):
    """First ``count`` positive rationals in Calkin-Wilf order: 1, 1/2, 2, 1/3, 3/2, ..."""
    out = []
    q = Fraction(1)
    for _ in range(count):
        out.append(q)
        q = 1 / (2 * (q.numerator // q.denominator) - q + 1)
    return out


def rational_nodes(K, interval):
    """Map the first ``K`` Calkin-Wilf rationals into ``interval`` via ``q -> q/(1+q)``."""
    lo, hi = interval
    return np.array([lo + (hi - lo) * float(q / (1 + q)) for q in calkin_wilf(K)])


def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, plus first and second derivatives."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    u = 1.0 - tt

    def e(s):
        return np.exp(-1.0 / s)

    def e1(s):
        return e(s) / s**2

    def e2(s):
        return e(s) * (1.0 / s**4 - 2.0 / s**3)

    N, N1, N2 = e(tt), e1(tt), e2(tt)
    D = N + e(u)
    D1 = N1 - e1(u)
    D2 = N2 + e2(u)
    S = N / D
    S1 = (N1 * D - N * D1) / D**2
    S2 = (N2 * D - N * D2) / D**2 - 2.0 * D1 * (N1 * D - N * D1) / D**3
    S = np.where(inside, S, (t >= 1).astype(float))
    S1 = np.where(inside, S1, 0.0)
    S2 = np.where(inside, S2, 0.0)
    return S, S1, S2


def bump(s, delta):
    """Cut-off ``phi`` equal to 1 on ``|s| <= delta`` and 0 on ``|s| >= 2*delta``, with derivatives."""
    s = np.asarray(s, dtype=float)
    S, S1, S2 = _smoothstep(2.0 - np.abs(s) / delta)
    return S, -np.sign(s) * S1 / delta, S2 / delta**2


def _oscillator(s):
    """``s**4 cos(1/s)`` and its first two derivatives, all set to 0 at the removable point."""
    near = np.abs(s) < SINGULAR_GAP
    ss = np.where(near, 1.0, s)
    c, sn = np.cos(1.0 / ss), np.sin(1.0 / ss)
    g = ss**4 * c
    g1 = 4.0 * ss**3 * c + ss**2 * sn
    g2 = (12.0 * ss**2 - 1.0) * c + 6.0 * ss * sn
    zero = np.zeros_like(s)
    return np.where(near, zero, g), np.where(near, zero, g1), np.where(near, zero, g2)


def surface_profile(x, K, delta, interval=(-3.0, 3.0)):
    """The one-dimensional profile ``F(x)`` of the surface with ``F'`` and ``F''``."""
    x = np.asarray(x, dtype=float)
    F = np.zeros_like(x)
    F1 = np.zeros_like(x)
    F2 = np.zeros_like(x)
    for k, xk in enumerate(rational_nodes(K, interval), start=1):
        s = x - xk
        active = np.abs(s) < 2.0 * delta
        if not np.any(active):
            continue
        phi, phi1, phi2 = bump(s, delta)
        g, g1, g2 = _oscillator(s)
        w = 0.5**k
        F += w * np.where(active, phi * g, 0.0)
        F1 += w * np.where(active, phi1 * g + phi * g1, 0.0)
        F2 += w * np.where(active, phi2 * g + 2.0 * phi1 * g1 + phi * g2, 0.0)
    return F, F1, F2


def sleigh_surface(p, K, delta, interval=(-3.0, 3.0)):
    """K-term truncated surface at ``p = (x, y)``: returns ``(f, grad, hess)``.

    Vectorised over leading axes of ``p``.
    """
    if K < 1:
        raise InvalidParameter("K must be at least 1")
    if delta <= 0:
        raise InvalidParameter("delta must be positive")
    p = np.asarray(p, dtype=float)
    F, F1, F2 = surface_profile(p[..., 0], K, delta, interval)
    zero = np.zeros_like(F)
    grad = np.stack([F1, zero], axis=-1)
    hess = np.stack([np.stack([F2, zero], -1), np.stack([zero, zero], -1)], -2)
    return F, grad, hess


def _sleigh_metric(mass, inertia, K, delta, interval):
    if K == 0:
        return Field.constant(np.diag([mass, mass, inertia]))

    def surface(q):
        _, grad, hess = sleigh_surface(q[..., :2], K, delta, interval)
        return grad, hess

    def value(q):
        grad, _ = surface(q)
        fx, fy = grad[..., 0], grad[..., 1]
        G = np.zeros(q.shape[:-1] + (3, 3))
        G[..., 0, 0] = mass * (1.0 + fx**2)
        G[..., 0, 1] = G[..., 1, 0] = mass * fx * fy
        G[..., 1, 1] = mass * (1.0 + fy**2)
        G[..., 2, 2] = inertia
        return G

    def deriv(q):
        grad, hess = surface(q)
        fx, fy = grad[..., 0], grad[..., 1]
        dG = np.zeros(q.shape[:-1] + (3, 3, 3))
        for l in range(2):
            fxl, fyl = hess[..., 0, l], hess[..., 1, l]
            dG[..., 0, 0, l] = 2.0 * mass * fx * fxl
            dG[..., 0, 1, l] = dG[..., 1, 0, l] = mass * (fxl * fy + fx * fyl)
            dG[..., 1, 1, l] = 2.0 * mass * fy * fyl
        return dG

    return Field(value, deriv, (3, 3))


def _knife_edge():
    def value(q):
        th = q[..., 2]
        a = np.zeros(q.shape[:-1] + (1, 3))
        a[..., 0, 0] = np.sin(th)
        a[..., 0, 1] = -np.cos(th)
        return a

    def deriv(q):
        th = q[..., 2]
        da = np.zeros(q.shape[:-1] + (1, 3, 3))
        da[..., 0, 0, 2] = np.cos(th)
        da[..., 0, 1, 2] = np.sin(th)
        return da

    return Field(value, deriv, (1, 3))


def build_sleigh_system(
    mass=1.0,
    inertia=1.0,
    K=0,
    delta=0.1,
    h=10.0,
    half_width=3.0,
    theta_range=100.0,
    derivative_mode="analytic",
    h_fd=1e-6,
):
    """Sleigh with configuration ``(x, y, theta)`` and knife-edge constraint
    ``sin(theta) x' - cos(theta) y' = 0`` on the surface of :func:`sleigh_surface`.

    ``K = 0`` is the flat, smooth sleigh with ``G = diag(mass, mass, inertia)``.
    The potential is identically zero. Bumps sit at rationals mapped into the
    ``x`` range ``(-half_width, half_width)`` of the domain.
    """
    if mass <= 0 or inertia <= 0:
        raise InvalidParameter("mass and inertia must be positive")
    if delta <= 0:
        raise InvalidParameter("delta must be positive")
    if K < 0:
        raise InvalidParameter("K must be non-negative")
    K = int(K)
    interval = (-half_width, half_width)
    fx_sup = 0.0
    if K > 0:
        xs = np.linspace(-half_width, half_width, 200001)
        fx_sup = float(np.max(np.abs(surface_profile(xs, K, delta, interval)[1])))
    return MechanicalSystem(
        m=3,
        n=1,
        lower=[-half_width, -half_width, -theta_range],
        upper=[half_width, half_width, theta_range],
        metric=_sleigh_metric(mass, inertia, K, delta, interval),
        potential=Field.constant(0.0),
        constraint=_knife_edge(),
        h=float(h),
        derivative_mode=derivative_mode,
        h_fd=h_fd,
        c1=min(mass, inertia),
        c2=max(mass * (1.0 + 1.01 * fx_sup**2), inertia),
        name="sleigh",
        params=dict(mass=mass, inertia=inertia, K=K, delta=delta, half_width=half_width),
    )


def sleigh_circle(t, speed=1.0, omega=1.0, theta0=0.0):
    """Closed-form flat-sleigh motion from the origin: position, velocity, acceleration.

    The contact point moves with constant speed along the heading ``theta0 + omega*t``.
    """
    t = np.asarray(t, dtype=float)
    th = theta0 + omega * t
    if omega == 0:
        x = speed * t * np.cos(theta0)
        y = speed * t * np.sin(theta0)
    else:
        x = speed * (np.sin(th) - np.sin(theta0)) / omega
        y = speed * (np.cos(theta0) - np.cos(th)) / omega
    pos = np.stack([x, y, th], -1)
    vel = np.stack([speed * np.cos(th), speed * np.sin(th), np.full_like(t, omega)], -1)
    acc = np.stack([-speed * omega * np.sin(th), speed * omega * np.cos(th), np.zeros_like(t)], -1)
    return pos, vel, acc
