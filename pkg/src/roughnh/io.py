"""CSV and JSON files: trajectories, multiplier tracks and reports."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .errors import MalformedTrajectory

FLOAT_FMT = "%.17g"


def trajectory_header(m, n):
    cols = ["t"]
    cols += [f"x{i}" for i in range(1, m + 1)]
    cols += [f"v{i}" for i in range(1, m + 1)]
    cols += [f"acc{i}" for i in range(1, m + 1)]
    cols += ["H"]
    cols += [f"cres{i}" for i in range(1, n + 1)]
    return cols


def write_trajectory(path, traj):
    m, n = traj.x.shape[1], traj.cres.shape[1]
    table = np.column_stack([traj.times, traj.x, traj.v, traj.acc, traj.energy, traj.cres])
    np.savetxt(path, table, fmt=FLOAT_FMT, delimiter=",", header=",".join(trajectory_header(m, n)), comments="")


def read_trajectory(path, system=None, m=None, n=None):
    """Parse a trajectory CSV; ``m`` and ``n`` come from ``system`` when given."""
    path = Path(path)
    if system is not None:
        m, n = system.m, system.n
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            table = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise MalformedTrajectory(f"cannot parse {path}: {exc}") from exc
    cols = [c.strip() for c in header.split(",")]
    if m is None or n is None:
        m = sum(1 for c in cols if c.startswith("x"))
        n = sum(1 for c in cols if c.startswith("cres"))
    if cols != trajectory_header(m, n):
        raise MalformedTrajectory(f"unexpected header in {path}: {header!r}")
    if table.shape[1] != len(cols) or table.shape[0] < 2:
        raise MalformedTrajectory(f"{path} has shape {table.shape}, expected (N+1, {len(cols)})")
    if not np.all(np.isfinite(table)):
        raise MalformedTrajectory(f"{path} contains non-finite values")
    t = table[:, 0]
    dt = t[1] - t[0]
    if not dt > 0 or not np.array_equal(t, np.arange(len(t)) * dt):
        raise MalformedTrajectory(f"{path} is not on a uniform grid t_j = j*dt")
    x = table[:, 1 : 1 + m]
    v = table[:, 1 + m : 1 + 2 * m]
    acc = table[:, 1 + 2 * m : 1 + 3 * m]
    H = table[:, 1 + 3 * m]
    cres = table[:, 2 + 3 * m :]
    return Trajectory(dt=float(dt), times=t, x=x, v=v, acc=acc, energy=H, cres=cres, h_prime=float(H[0]), system=system)


def write_gamma(path, track):
    n = track.gamma.shape[1]
    header = ",".join(["t"] + [f"gamma{i}" for i in range(1, n + 1)])
    np.savetxt(path, np.column_stack([track.times, track.gamma]), fmt=FLOAT_FMT, delimiter=",", header=header, comments="")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
