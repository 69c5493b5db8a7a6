"""Distances between trajectories and the study of the smoothing sequence as eps -> 0."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import constraint_drift, energy_drift, integrate, max_acceleration
from .errors import GridMismatch, InvalidAlpha, InvalidParameter, RoughNHError
from .mollify import mollify_system, sup_deviation

FULL_PAIR_LIMIT = 2000
PAIR_SAMPLES = 10**6


def _check_pair(t1, t2):
    if not t1.same_grid(t2) or t1.x.shape != t2.x.shape:
        raise GridMismatch("trajectories live on different time grids")


def c0_distance(t1, t2):
    _check_pair(t1, t2)
    return float(np.max(np.linalg.norm(t1.x - t2.x, axis=1)))


def c1_distance(t1, t2):
    _check_pair(t1, t2)
    return c0_distance(t1, t2) + float(np.max(np.linalg.norm(t1.v - t2.v, axis=1)))


def holder_seminorm(values, times, alpha, seed=0):
    """Discrete ``sup |f(t_j) - f(t_k)| / |t_j - t_k|**alpha`` over node pairs.

    Exhaustive up to ``FULL_PAIR_LIMIT`` nodes; beyond that a seeded sample
    of about ``PAIR_SAMPLES`` pairs stratified by lag.
    """
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha!r}")
    values = np.asarray(values, dtype=float).reshape(len(times), -1)
    N = len(times) - 1
    best = 0.0
    if N <= FULL_PAIR_LIMIT:
        for lag in range(1, N + 1):
            diff = np.linalg.norm(values[lag:] - values[:-lag], axis=1)
            gap = (times[lag:] - times[:-lag]) ** alpha
            best = max(best, float(np.max(diff / gap)))
        return best
    rng = np.random.default_rng(seed)
    per_lag = max(1, PAIR_SAMPLES // N)
    for lag in range(1, N + 1):
        count = N + 1 - lag
        start = np.arange(count) if count <= per_lag else rng.integers(0, count, per_lag)
        diff = np.linalg.norm(values[start + lag] - values[start], axis=1)
        gap = (times[start + lag] - times[start]) ** alpha
        best = max(best, float(np.max(diff / gap)))
    return best


def c1alpha_distance(t1, t2, alpha, seed=0):
    """``C^0`` + ``C^1`` + Hölder-``alpha`` seminorm of the velocity difference."""
    _check_pair(t1, t2)
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha!r}")
    return c1_distance(t1, t2) + holder_seminorm(t1.v - t2.v, t1.times, alpha, seed)


@dataclass
class StageResult:
    epsilon: float
    ok: bool
    error: str | None = None
    max_acceleration: float | None = None
    energy_drift: float | None = None
    constraint_residual: float | None = None
    sup_dev_G: float | None = None
    sup_dev_a: float | None = None
    b_norm: float | None = None


@dataclass
class ConvergenceReport:
    epsilons: list
    alpha: float
    stages: list
    c0: list
    c1: list
    c1alpha: list
    verdict: bool
    decay_ok: bool
    kappa_spread: float | None
    settings: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _field_points(traj, count=2000):
    idx = np.unique(np.linspace(0, len(traj.times) - 1, count).astype(int))
    return traj.x[idx]


def convergence_study(
    system,
    x0,
    v0,
    tau,
    dt,
    eps_schedule,
    alpha=0.5,
    quad_points=9,
    stabilize=True,
    slack=1.1,
    floor=1e-12,
    keep_trajectories=False,
):
    """Integrate the smoothed system for every radius and compare neighbours.

    A failing stage is recorded (``ok=False`` with the error text) and skipped.
    ``verdict`` is true iff consecutive ``C^1`` distances satisfy
    ``d_k <= slack * d_{k-1} + floor`` and the largest acceleration varies by at
    most a factor 2 across the successful stages (``floor`` added to both).
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise InvalidParameter("eps_schedule must be strictly decreasing")
    stages, trajs = [], []
    probe = None
    for eps in eps_schedule:
        try:
            ms = mollify_system(system, eps, x0, v0, quad_points)
            tr = integrate(ms, x0, v0, tau, dt, stabilize=stabilize)
        except RoughNHError as exc:
            stages.append(StageResult(eps, False, f"{type(exc).__name__}: {exc}"))
            trajs.append(None)
            continue
        if probe is None:
            probe = _field_points(tr)
        stages.append(
            StageResult(
                epsilon=eps,
                ok=True,
                max_acceleration=max_acceleration(tr),
                energy_drift=energy_drift(tr),
                constraint_residual=constraint_drift(tr),
                sup_dev_G=sup_deviation(ms.metric, system.metric, probe),
                sup_dev_a=sup_deviation(ms.constraint, system.constraint, probe),
                b_norm=float(np.linalg.norm(ms.b)),
            )
        )
        trajs.append(tr)

    c0, c1, c1a = [], [], []
    for prev, cur in zip(trajs, trajs[1:]):
        if prev is None or cur is None:
            c0.append(None)
            c1.append(None)
            c1a.append(None)
            continue
        c0.append(c0_distance(prev, cur))
        c1.append(c1_distance(prev, cur))
        c1a.append(c1alpha_distance(prev, cur, alpha))

    known = [d for d in c1 if d is not None]
    decay_ok = len(known) > 0 and all(b <= slack * a + floor for a, b in zip(known, known[1:]))
    kappas = [s.max_acceleration for s in stages if s.ok]
    # the floor keeps round-off accelerations of force-free motions from faking a spread
    spread = (max(kappas) + floor) / (min(kappas) + floor) if kappas else None
    verdict = bool(decay_ok and spread is not None and spread <= 2.0)
    report = ConvergenceReport(
        epsilons=eps_schedule,
        alpha=float(alpha),
        stages=stages,
        c0=c0,
        c1=c1,
        c1alpha=c1a,
        verdict=verdict,
        decay_ok=bool(decay_ok),
        kappa_spread=spread,
        settings=dict(
            x0=[float(t) for t in np.asarray(x0)],
            v0=[float(t) for t in np.asarray(v0)],
            tau=float(tau),
            dt=float(dt),
            quad_points=int(quad_points),
            stabilize=bool(stabilize),
            slack=slack,
            floor=floor,
        ),
    )
    if keep_trajectories:
        report.trajectories = trajs
    return report
