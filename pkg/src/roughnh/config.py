"""TOML run configurations.

Example::

    [system]
    kind = "polynomial"          # or "sleigh"
    m = 2
    n = 1
    domain = [[-5.0, 5.0], [-5.0, 5.0]]
    h = 10.0
    metric = [[1.0, 0.0], [0.0, 1.0]]
    potential = [[1.0, 1, 0]]    # list of terms [coef, e1, ..., em]
    constraint = [[1.0, 0.0]]

    [initial]
    x0 = [0.0, 0.0]
    v0 = [0.0, 1.0]

    [run]
    tau = 1.0
    dt = 0.01
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, RoughNHError
from .model import MechanicalSystem, PolynomialField
from .sleigh import build_sleigh_system

SYSTEM_KINDS = ("sleigh", "polynomial")


def build_system(table):
    """Build a :class:`MechanicalSystem` from the ``[system]`` table."""
    table = dict(table)
    kind = table.get("kind")
    common = dict(
        derivative_mode=table.get("derivative_mode", "analytic"),
        h_fd=float(table.get("h_fd", 1e-6)),
    )
    try:
        if kind == "sleigh":
            return build_sleigh_system(
                mass=float(table.get("mass", 1.0)),
                inertia=float(table.get("inertia", 1.0)),
                K=int(table.get("K", 0)),
                delta=float(table.get("delta", 0.1)),
                h=float(table.get("h", 10.0)),
                half_width=float(table.get("half_width", 3.0)),
                theta_range=float(table.get("theta_range", 100.0)),
                **common,
            )
        if kind == "polynomial":
            m, n = int(table["m"]), int(table["n"])
            domain = np.asarray(table["domain"], dtype=float)
            if domain.shape != (m, 2):
                raise ConfigError(f"domain must be a list of {m} [lower, upper] pairs")
            return MechanicalSystem(
                m=m,
                n=n,
                lower=domain[:, 0],
                upper=domain[:, 1],
                metric=PolynomialField(table["metric"], m, (m, m)),
                potential=PolynomialField(table.get("potential", 0.0), m, ()),
                constraint=PolynomialField(table["constraint"], m, (n, m)),
                h=float(table["h"]),
                c1=table.get("c1"),
                c2=table.get("c2"),
                name=table.get("name", "polynomial"),
                **common,
            )
    except KeyError as exc:
        raise ConfigError(f"[system] is missing key {exc}") from exc
    except ConfigError:
        raise
    except (RoughNHError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [system] table: {exc}") from exc
    raise ConfigError(f"unknown system kind {kind!r}; expected one of {SYSTEM_KINDS}")


@dataclass
class RunConfig:
    system_spec: dict
    x0: list
    v0: list
    tau: float
    dt: float
    stabilize: bool = True
    energy_tol: float = 1e-8
    constraint_tol: float = 1e-10
    epsilon: float | None = None
    eps_schedule: list | None = None
    stages: int = 5
    eps0: float | None = None
    quad_points: int = 9
    alpha: float = 0.5
    basis_size: int = 4
    n_knots: int | None = None
    verify_tests: int = 10
    verify_degree: int = 4
    verify_seed: int = 0
    verify_tol: float = 1e-9
    out: str = "out"
    system: MechanicalSystem | None = field(default=None, repr=False)

    def echo(self):
        """All settings, defaults included, for embedding in reports."""
        d = asdict(self)
        d.pop("system")
        return d

    def schedule(self):
        if self.eps_schedule is not None:
            return list(self.eps_schedule)
        eps0 = self.eps0 if self.eps0 is not None else self.system.diameter / 10.0
        return [eps0 * 0.5**k for k in range(self.stages)]


def parse_config(data):
    if "system" not in data:
        raise ConfigError("missing [system] table")
    system = build_system(data["system"])
    init = data.get("initial", {})
    run = data.get("run", {})
    mol = data.get("mollify", {})
    conv = data.get("converge", {})
    ver = data.get("verify", {})
    rec = data.get("reconstruct", {})
    try:
        cfg = RunConfig(
            system_spec=dict(data["system"]),
            x0=[float(t) for t in init["x0"]],
            v0=[float(t) for t in init["v0"]],
            tau=float(run["tau"]),
            dt=float(run["dt"]),
            stabilize=bool(run.get("stabilize", True)),
            energy_tol=float(run.get("energy_tol", 1e-8)),
            constraint_tol=float(run.get("constraint_tol", 1e-10)),
            epsilon=None if mol.get("epsilon") is None else float(mol["epsilon"]),
            eps_schedule=None if mol.get("eps_schedule") is None else [float(e) for e in mol["eps_schedule"]],
            stages=int(mol.get("stages", 5)),
            eps0=None if mol.get("eps0") is None else float(mol["eps0"]),
            quad_points=int(mol.get("quad_points", 9)),
            alpha=float(conv.get("alpha", 0.5)),
            basis_size=int(rec.get("basis_size", 4)),
            n_knots=None if rec.get("n_knots") is None else int(rec["n_knots"]),
            verify_tests=int(ver.get("n_tests", 10)),
            verify_degree=int(ver.get("degree", 4)),
            verify_seed=int(ver.get("seed", 0)),
            verify_tol=float(ver.get("tolerance", 1e-9)),
            out=str(data.get("output", {}).get("dir", "out")),
            system=system,
        )
    except KeyError as exc:
        raise ConfigError(f"missing required key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value: {exc}") from exc
    validate(cfg)
    return cfg


def validate(cfg):
    m = cfg.system.m
    if len(cfg.x0) != m or len(cfg.v0) != m:
        raise ConfigError(f"x0 and v0 must have length m={m}")
    if not (cfg.tau > 0 and cfg.dt > 0):
        raise ConfigError("tau and dt must be positive")
    steps = cfg.tau / cfg.dt
    if not math.isclose(steps, round(steps), rel_tol=0, abs_tol=1e-9 * max(1.0, steps)):
        raise ConfigError(f"tau/dt = {steps!r} is not an integer")
    if not 0 < cfg.alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if cfg.epsilon is not None and cfg.epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if cfg.eps_schedule is not None and any(b >= a for a, b in zip(cfg.eps_schedule, cfg.eps_schedule[1:])):
        raise ConfigError("eps_schedule must be strictly decreasing")


def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path} is not valid TOML: {exc}") from exc
    return parse_config(data)
