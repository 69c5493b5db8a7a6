"""Mechanical systems: metric, potential and velocity constraints on a box chart.

Fields are vectorised callables: a point array of shape ``(..., m)`` maps to
values of shape ``(..., *field.shape)``. Derivatives carry the differentiation
index last, so ``dG[..., i, j, l]`` is the derivative of ``G[i, j]`` with
respect to ``x[l]`` and ``da[..., k, j, l]`` that of ``a[k, j]``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateConstraint, InvalidParameter, NonFiniteInput, OutOfDomain

DEFAULT_H_FD = 1e-6
DETERMINANT_FLOOR = 1e-12


class Field:
    """A vectorised field with an optional analytic derivative."""

    def __init__(self, value, grad=None, shape=()):
        self.value = value
        self.grad = grad
        self.shape = tuple(shape)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    @property
    def has_grad(self):
        return self.grad is not None

    def value_and_grad(self, x, h_fd=None):
        """Return ``(value, derivative)``.

        Central differences with step ``h_fd`` are used when ``h_fd`` is given
        or when no analytic derivative was supplied.
        """
        x = np.asarray(x, dtype=float)
        if h_fd is None and self.grad is not None:
            return self.value(x), self.grad(x)
        return central_difference(self.value, x, DEFAULT_H_FD if h_fd is None else h_fd)

    @classmethod
    def constant(cls, c):
        c = np.array(c, dtype=float)
        c.flags.writeable = False
        zero = {}

        def value(x):
            if x.ndim == 1:
                return c
            return np.broadcast_to(c, x.shape[:-1] + c.shape).copy()

        def grad(x):
            if x.ndim == 1:
                if x.shape[0] not in zero:
                    z = np.zeros(c.shape + x.shape)
                    z.flags.writeable = False
                    zero[x.shape[0]] = z
                return zero[x.shape[0]]
            return np.zeros(x.shape[:-1] + c.shape + (x.shape[-1],))

        return cls(value, grad, c.shape)


def central_difference(fun, x, h_fd):
    """Value and central-difference derivative of a vectorised ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    batch = x.shape[:-1]
    steps = h_fd * np.eye(m)
    pts = np.concatenate(
        [x[..., None, :], x[..., None, :] + steps, x[..., None, :] - steps], axis=-2
    )
    out = fun(pts)
    nb = len(batch)
    value = np.take(out, 0, axis=nb)
    plus = np.take(out, np.arange(1, m + 1), axis=nb)
    minus = np.take(out, np.arange(m + 1, 2 * m + 1), axis=nb)
    grad = (plus - minus) / (2.0 * h_fd)
    return value, np.moveaxis(grad, nb, -1)


class PolynomialField(Field):
    """Entries given as sums of monomials ``coef * prod(x**exps)``.

    ``entries`` is a nested list of the given ``shape``; each leaf is either a
    number (a constant) or a list of terms ``[coef, e_1, ..., e_m]``.
    """

    def __init__(self, entries, m, shape):
        shape = tuple(shape)
        leaves = _leaves(entries, shape)
        coefs, exps, rows = [], [], []
        for idx, leaf in enumerate(leaves):
            if isinstance(leaf, (int, float)):
                terms = [[float(leaf)] + [0] * m] if leaf != 0 else []
            else:
                terms = leaf
            for term in terms:
                if len(term) != m + 1:
                    raise InvalidParameter(f"polynomial term {term!r} needs 1 + {m} numbers")
                coefs.append(float(term[0]))
                exps.append([int(e) for e in term[1:]])
                rows.append(idx)
        self.m = m
        self.exps = np.array(exps, dtype=int).reshape(-1, m)
        self.mix = np.zeros((len(leaves), len(coefs)))
        self.mix[rows, np.arange(len(coefs))] = coefs
        super().__init__(self._value, self._grad, shape)

    def _monomials(self, x, exps):
        return np.prod(x[..., None, :] ** exps, axis=-1)

    def _value(self, x):
        out = self._monomials(x, self.exps) @ self.mix.T
        return out.reshape(x.shape[:-1] + self.shape)

    def _grad(self, x):
        cols = []
        for l in range(self.m):
            e = self.exps.copy()
            e[:, l] = np.maximum(e[:, l] - 1, 0)
            dmon = self.exps[:, l] * self._monomials(x, e)
            cols.append((dmon @ self.mix.T).reshape(x.shape[:-1] + self.shape))
        return np.stack(cols, axis=-1)


def _leaves(entries, shape):
    if not shape:
        return [entries]
    if not isinstance(entries, (list, tuple)) or len(entries) != shape[0]:
        raise InvalidParameter(f"polynomial table does not match shape {shape}")
    out = []
    for e in entries:
        out.extend(_leaves(e, shape[1:]))
    return out


def as_field(obj, shape=None):
    if isinstance(obj, Field):
        return obj
    if callable(obj):
        return Field(obj, None, shape or ())
    return Field.constant(obj)


@dataclass(frozen=True, eq=False)
class MechanicalSystem:
    """Kinetic metric ``G``, potential ``V`` and constraints ``a`` on the open box ``(lower, upper)``.

    ``h`` caps the energy; motions are required to stay in ``{V < h}``.
    ``c1`` and ``c2`` are the stored ellipticity constants of ``G``.
    """

    m: int
    n: int
    lower: np.ndarray
    upper: np.ndarray
    metric: Field
    potential: Field
    constraint: Field
    h: float
    derivative_mode: str = "analytic"
    h_fd: float = DEFAULT_H_FD
    c1: float | None = None
    c2: float | None = None
    rho: float = 1e-8
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 < self.n < self.m):
            raise InvalidParameter(f"need 0 < n < m, got n={self.n}, m={self.m}")
        if self.derivative_mode not in ("analytic", "central"):
            raise InvalidParameter(f"unknown derivative_mode {self.derivative_mode!r}")
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != (self.m,) or self.upper.shape != (self.m,):
            raise InvalidParameter("domain bounds must have length m")
        if np.any(self.lower >= self.upper):
            raise InvalidParameter("empty domain box")

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x):
        return bool((x > self.lower).all() and (x < self.upper).all())

    def _step(self):
        return self.h_fd if self.derivative_mode == "central" else None

    def metric_and_grad(self, x):
        return self.metric.value_and_grad(x, self._step())

    def potential_and_grad(self, x):
        return self.potential.value_and_grad(x, self._step())

    def constraint_and_grad(self, x):
        return self.constraint.value_and_grad(x, self._step())

    def fields(self, x):
        """``(G, dG, V, gradV, a, da)`` at ``x`` without domain or pivot checks."""
        G, dG = self.metric_and_grad(x)
        V, gV = self.potential_and_grad(x)
        a, da = self.constraint_and_grad(x)
        return G, dG, float(V), gV, a, da


@dataclass(eq=False)
class FieldSample:
    x: np.ndarray
    G: np.ndarray
    dG: np.ndarray
    V: float
    gradV: np.ndarray
    a: np.ndarray
    da: np.ndarray

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.a.shape[1]

    @functools.cached_property
    def Ginv(self):
        return np.linalg.inv(self.G)

    @functools.cached_property
    def pivot(self):
        """Column permutation whose first ``n`` entries give an invertible block ``A``."""
        return choose_pivot(self.a)

    @property
    def A(self):
        return self.a[:, self.pivot[: self.n]]

    @property
    def Q(self):
        return self.a[:, self.pivot[self.n:]]

    @property
    def B(self):
        return -np.linalg.solve(self.A, self.Q)


def pivot_candidates(a):
    n, m = a.shape
    _, perm = scipy.linalg.qr(a, mode="r", pivoting=True)
    cands = [np.arange(m), _canonical(perm, n)]
    return cands


def _canonical(perm, n):
    perm = np.asarray(perm)
    return np.concatenate([np.sort(perm[:n]), np.sort(perm[n:])])


def block_det(a, pivot):
    return abs(np.linalg.det(a[:, pivot[: a.shape[0]]]))


def choose_pivot(a):
    best, best_det = None, -1.0
    for cand in pivot_candidates(a):
        d = block_det(a, cand)
        if d > best_det:
            best, best_det = cand, d
    if best_det < DETERMINANT_FLOOR:
        raise DegenerateConstraint(f"no pivot block with |det A| >= {DETERMINANT_FLOOR:g}")
    return best


def check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput("non-finite entries in input")


def check_domain(system, x):
    x = np.asarray(x, dtype=float)
    check_finite(x)
    if x.shape != (system.m,):
        raise InvalidParameter(f"expected a point of length {system.m}, got shape {x.shape}")
    if not system.contains(x):
        raise OutOfDomain(f"x={x.tolist()} is not inside the open domain box")
    return x


def evaluate(system, x, check_pivot=True):
    """Bundle every field value and derivative at ``x``.

    The pivot is computed (and degeneracy reported) eagerly unless
    ``check_pivot`` is false, in which case it is computed on first access.
    """
    x = check_domain(system, x)
    G, dG, V, gV, a, da = system.fields(x)
    s = FieldSample(x, G, dG, V, gV, a, da)
    if check_pivot:
        s.pivot
    return s


def kinetic_energy(G, v):
    G = np.asarray(G, dtype=float)
    v = np.asarray(v, dtype=float)
    check_finite(G, v)
    return 0.5 * float(v @ G @ v)


def energy(system, x, v):
    x = check_domain(system, x)
    G, _ = system.metric_and_grad(x)
    V, _ = system.potential_and_grad(x)
    return kinetic_energy(G, v) + float(V)


def constraint_residual(system, x, v):
    x = check_domain(system, x)
    a = system.constraint(x)
    return a @ np.asarray(v, dtype=float)


def make_system(m, n, metric, potential, constraint, lower, upper, h, **kwargs):
    """Convenience constructor accepting constants, callables or :class:`Field` objects."""
    return MechanicalSystem(
        m=m,
        n=n,
        lower=lower,
        upper=upper,
        metric=as_field(metric, (m, m)),
        potential=as_field(potential, ()),
        constraint=as_field(constraint, (n, m)),
        h=float(h),
        **kwargs,
    )


def sample_domain(system, count, rng, lower=None, upper=None):
    """Uniform random points strictly inside the box (or a sub-box)."""
    lo = system.lower if lower is None else np.asarray(lower, dtype=float)
    hi = system.upper if upper is None else np.asarray(upper, dtype=float)
    pad = 1e-9 * (hi - lo)
    return rng.uniform(lo + pad, hi - pad, size=(count, system.m))


@dataclass
class SystemCheck:
    max_asymmetry: float
    min_rayleigh: float
    max_rayleigh: float
    min_singular_value: float
    min_block_det: float
    c1: float | None
    c2: float | None

    @property
    def ok(self):
        elliptic = True
        if self.c1 is not None:
            elliptic &= self.min_rayleigh >= self.c1 * (1 - 1e-12)
        if self.c2 is not None:
            elliptic &= self.max_rayleigh <= self.c2 * (1 + 1e-12)
        return (
            self.max_asymmetry <= 1e-12
            and self.min_rayleigh > 0
            and elliptic
            and self.min_singular_value > 1e-10
            and self.min_block_det >= DETERMINANT_FLOOR
        )


def check_system(system, points, rng, n_directions=100):
    """Measure the structural hypotheses on ``G`` and ``a`` at the given points."""
    points = np.atleast_2d(points)
    G = system.metric(points)
    a = system.constraint(points)
    asym = float(np.max(np.abs(G - np.swapaxes(G, -1, -2))))
    xi = rng.normal(size=(n_directions, system.m))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    quad = np.einsum("di,pij,dj->pd", xi, G, xi)
    for Gp in G:
        np.linalg.cholesky(0.5 * (Gp + Gp.T))
    svals = np.linalg.svd(a, compute_uv=False)
    dets = [block_det(ap, choose_pivot(ap)) for ap in a]
    return SystemCheck(
        max_asymmetry=asym,
        min_rayleigh=float(quad.min()),
        max_rayleigh=float(quad.max()),
        min_singular_value=float(svals.min()),
        min_block_det=float(min(dets)),
        c1=system.c1,
        c2=system.c2,
    )
