"""Command-line entry point ``roughnh``.

Exit codes: 0 success, 1 a tolerance was not met, 2 bad configuration or
initial data, 3 integration failure, 4 malformed trajectory file,
5 rank-deficient multiplier fit. Every failure writes ``error.json``.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .convergence import _field_points, convergence_study
from .dynamics import _sample, constraint_drift, energy_drift, integrate, max_acceleration, project_velocity
from .errors import (
    AnchorViolation,
    ConfigError,
    InvalidParameter,
    LeftSublevel,
    MalformedTrajectory,
    RankDeficient,
    RoughNHError,
)
from .io import read_trajectory, write_gamma, write_json, write_trajectory
from .mollify import mollify_report, mollify_system
from .weakform import admissible_test, lagrangian_samples, random_polynomial_psi_hat, reconstruct_multipliers, weak_residual

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_TRAJECTORY = 4
EXIT_RANK = 5


class CommandError(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.message = message


def _classify(exc):
    if isinstance(exc, CommandError):
        return exc
    if isinstance(exc, AnchorViolation):
        return CommandError(EXIT_CONFIG, "AnchorViolation", f"anchor violated: {exc}")
    if isinstance(exc, (ConfigError, InvalidParameter)):
        return CommandError(EXIT_CONFIG, type(exc).__name__, str(exc))
    if isinstance(exc, LeftSublevel) and "initial energy" in str(exc):
        return CommandError(EXIT_CONFIG, "LeftSublevel", str(exc))
    if isinstance(exc, MalformedTrajectory):
        return CommandError(EXIT_TRAJECTORY, "MalformedTrajectory", str(exc))
    if isinstance(exc, RankDeficient):
        return CommandError(EXIT_RANK, "RankDeficient", str(exc))
    return CommandError(EXIT_INTEGRATION, type(exc).__name__, str(exc))


def _initial_velocity(cfg, system, project):
    x0 = np.asarray(cfg.x0, dtype=float)
    v0 = np.asarray(cfg.v0, dtype=float)
    s0 = _sample(system, x0)
    if project:
        v0 = project_velocity(s0, v0)
    res = float(np.linalg.norm(s0.a @ v0))
    if res > 1e-10:
        raise AnchorViolation(f"|a(x0) v0| = {res:.3e} > 1e-10; rerun with --project-initial-velocity")
    return x0, v0


def _simulated_system(cfg, x0, v0):
    if cfg.epsilon is None:
        return cfg.system
    return mollify_system(cfg.system, cfg.epsilon, x0, v0, cfg.quad_points)


def _summary(cfg, traj):
    drift = energy_drift(traj)
    cres = constraint_drift(traj)
    return dict(
        h_prime=traj.h_prime,
        energy_drift=drift,
        max_constraint_residual=cres,
        max_acceleration=max_acceleration(traj),
        steps=len(traj.times) - 1,
        energy_ok=bool(drift <= cfg.energy_tol),
        constraint_ok=bool(cres <= cfg.constraint_tol),
        settings=cfg.echo(),
    )


def cmd_simulate(cfg, out, project=False):
    x0, v0 = _initial_velocity(cfg, cfg.system, project)
    system = _simulated_system(cfg, x0, v0)
    traj = integrate(system, x0, v0, cfg.tau, cfg.dt, stabilize=cfg.stabilize)
    write_trajectory(out / "trajectory.csv", traj)
    summary = _summary(cfg, traj)
    summary["initial_velocity"] = v0
    write_json(out / "summary.json", summary)
    write_json(out / "timing.json", dict(command="simulate", runtime_s=traj.stats["runtime_s"]))
    return EXIT_OK if summary["energy_ok"] and summary["constraint_ok"] else EXIT_TOLERANCE


def _load_trajectory(path, system):
    if path is None:
        raise ConfigError("--trajectory is required for this command")
    return read_trajectory(path, system)


def cmd_verify(cfg, out, trajectory):
    system = cfg.system
    traj = _load_trajectory(trajectory, system)
    if cfg.epsilon is not None:
        system = mollify_system(system, cfg.epsilon, traj.x[0], traj.v[0], cfg.quad_points)
        traj.system = system
    rng = np.random.default_rng(cfg.verify_seed)
    k = system.m - system.n
    L = lagrangian_samples(traj, system)
    residuals = []
    for _ in range(cfg.verify_tests):
        psi_hat = random_polynomial_psi_hat(rng, k, cfg.verify_degree, traj.tau)
        psi = admissible_test(traj, psi_hat, system)
        residuals.append(weak_residual(traj, psi, system, L))
    worst = max(residuals) if residuals else 0.0
    ok = bool(worst <= cfg.verify_tol)
    write_json(
        out / "verify-report.json",
        dict(
            trajectory=str(trajectory),
            residuals=residuals,
            max_residual=worst,
            tolerance=cfg.verify_tol,
            ok=ok,
            test_family=f"admissible, random polynomial psi_hat of degree {cfg.verify_degree}",
            seed=cfg.verify_seed,
            settings=cfg.echo(),
        ),
    )
    return EXIT_OK if ok else EXIT_TOLERANCE


def _schedule(cfg, stages):
    if stages is not None:
        if stages < 1:
            raise ConfigError("--stages must be at least 1")
        cfg.eps_schedule = None
        cfg.stages = stages
    return cfg.schedule()


def cmd_converge(cfg, out, project=False, stages=None):
    x0, v0 = _initial_velocity(cfg, cfg.system, project)
    schedule = _schedule(cfg, stages)
    t0 = time.perf_counter()
    report = convergence_study(
        cfg.system,
        x0,
        v0,
        cfg.tau,
        cfg.dt,
        schedule,
        alpha=cfg.alpha,
        quad_points=cfg.quad_points,
        stabilize=cfg.stabilize,
        keep_trajectories=True,
    )
    trajs = [t for t in report.trajectories if t is not None]
    points = _field_points(trajs[0]) if trajs else x0[None, :]
    mreport = mollify_report(cfg.system, schedule, x0, v0, points, cfg.quad_points)
    payload = report.to_dict()
    payload["settings"]["config"] = cfg.echo()
    mreport["settings"] = cfg.echo()
    write_json(out / "convergence-report.json", payload)
    write_json(out / "mollify-report.json", mreport)
    write_json(out / "timing.json", dict(command="converge", runtime_s=time.perf_counter() - t0))
    return EXIT_OK


def cmd_mollify(cfg, out, project=False, stages=None):
    x0, v0 = _initial_velocity(cfg, cfg.system, project)
    schedule = _schedule(cfg, stages)
    try:
        ms = mollify_system(cfg.system, schedule[0], x0, v0, cfg.quad_points)
        points = _field_points(integrate(ms, x0, v0, cfg.tau, cfg.dt, stabilize=cfg.stabilize))
    except RoughNHError:
        points = x0[None, :]
    mreport = mollify_report(cfg.system, schedule, x0, v0, points, cfg.quad_points)
    mreport["settings"] = cfg.echo()
    write_json(out / "mollify-report.json", mreport)
    return EXIT_OK


def cmd_reconstruct(cfg, out, trajectory):
    system = cfg.system
    traj = _load_trajectory(trajectory, system)
    if cfg.epsilon is not None:
        system = mollify_system(system, cfg.epsilon, traj.x[0], traj.v[0], cfg.quad_points)
        traj.system = system
    track = reconstruct_multipliers(traj, cfg.basis_size, system, n_knots=cfg.n_knots)
    write_gamma(out / "gamma.csv", track)
    write_json(
        out / "fit-report.json",
        dict(
            trajectory=str(trajectory),
            basis_size=cfg.basis_size,
            knots=track.knots,
            coefficients=track.coefficients,
            l2_norm=track.l2_norm,
            fit_residual=track.fit_residual,
            rank=track.rank,
            info=track.info,
            settings=cfg.echo(),
        ),
    )
    return EXIT_OK


def cmd_sleigh_demo(cfg, out, project=False, stages=None):
    """Simulate the configured sleigh, then run the smoothing study on it."""
    if cfg.system.name != "sleigh":
        raise ConfigError("sleigh-demo needs [system] kind = \"sleigh\"")
    sim = out / "simulate"
    conv = out / "converge"
    sim.mkdir(parents=True, exist_ok=True)
    conv.mkdir(parents=True, exist_ok=True)
    code = cmd_simulate(cfg, sim, project)
    cmd_converge(cfg, conv, project, stages)
    return code


COMMANDS = {
    "simulate": "integrate the configured system and write trajectory.csv and summary.json",
    "verify": "weak-form residuals of a trajectory CSV against random admissible test functions",
    "converge": "run the smoothing sequence and write convergence and mollify reports",
    "mollify": "write the mollify report for the configured radius schedule",
    "reconstruct": "least-squares multiplier fit from a trajectory CSV",
    "sleigh-demo": "simulate the sleigh and run the convergence study on it",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="roughnh", description="Nonholonomic mechanics with rough coefficients.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (default: [output].dir or ./out)")
        if name in ("verify", "reconstruct"):
            p.add_argument("--trajectory", required=True, help="trajectory CSV written by simulate")
        else:
            p.add_argument("--project-initial-velocity", action="store_true", help="project v0 onto ker a(x0) first")
        if name in ("converge", "mollify", "sleigh-demo"):
            p.add_argument("--stages", type=int, default=None, help="number of halving stages (overrides eps_schedule)")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out is not None else None
    try:
        cfg = load_config(args.config)
        out = Path(cfg.out) if out is None else out
        out.mkdir(parents=True, exist_ok=True)
        project = getattr(args, "project_initial_velocity", False)
        stages = getattr(args, "stages", None)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, project)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.trajectory)
        if args.command == "converge":
            return cmd_converge(cfg, out, project, stages)
        if args.command == "mollify":
            return cmd_mollify(cfg, out, project, stages)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, out, args.trajectory)
        return cmd_sleigh_demo(cfg, out, project, stages)
    except (RoughNHError, CommandError) as exc:
        err = _classify(exc)
        payload = dict(command=args.command, exit_code=err.code, error=err.kind, message=err.message)
        if out is None:
            out = Path("out")
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "error.json", payload)
        except OSError:
            pass
        print(f"roughnh {args.command}: {err.kind}: {err.message}", file=sys.stderr)
        return err.code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
