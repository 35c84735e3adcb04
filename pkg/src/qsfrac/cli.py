"""Command-line entry point: simulate, ladder, oracle, check."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import acceptance, io, linearize, solver
from .config import DEFAULTS_TOML, RunConfig, load_config
from .crack import CrackHistory, CrackState, accumulate
from .energy import get_density, identity_field
from .errors import ConfigError, QsfracError, SolverError
from .mesh import build_mesh, crackable_interfaces

log = logging.getLogger("qsfrac")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides [output].directory)")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--workers", type=int, help="concurrent ladder entries")
    common.add_argument("--print-defaults", action="store_true", help="print the default configuration and exit")
    ap = argparse.ArgumentParser(prog="qsfrac", description="Quasistatic brittle fracture simulator", parents=[common])
    sub = ap.add_subparsers(dest="command")
    sub.add_parser("simulate", parents=[common], help="single run, writes trajectory files")
    sub.add_parser("ladder", parents=[common], help="epsilon sweep and convergence report")
    sub.add_parser("oracle", parents=[common], help="greedy vs brute-force audit")
    ck = sub.add_parser("check", parents=[common], help="run the acceptance criteria")
    ck.add_argument("--only", type=int, nargs="*", help="criterion ids to run")
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, solve=replace(cfg.solve, rng_seed=args.seed))
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = replace(cfg, workers=args.workers)
    cfg.validate()
    return cfg


def _outdir(args, cfg: RunConfig) -> Path:
    out = args.out or Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _evolve(cfg: RunConfig, model: str, eps: float | None = None):
    c = cfg if eps is None else cfg.with_epsilon(eps)
    return solver.evolve(
        build_mesh(c.grid),
        model,
        c.params,
        solver.TimePartition(c.partition_level),
        c.program(),
        c.solve,
        c.initial_crack,
        get_density(c.density),
    )


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = _outdir(args, cfg)
    models = ("linear", "nonlinear") if cfg.model == "both" else (cfg.model,)
    for m in models:
        traj = _evolve(cfg, m)
        if cfg.output.trajectory:
            path = io.write_trajectory(traj, out / f"trajectory_{m}.json")
            print(f"wrote {path}")
        last = traj.energies[-1]
        print(f"{m}: final total energy {last.total:.6g}, broken interfaces {len(traj.cumulative[-1])}")
    # brute force is only affordable for the linear model on small meshes
    n_free = len(set(crackable_interfaces(build_mesh(cfg.grid))) - set(cfg.initial_crack))
    if cfg.output.oracle_check and "linear" in models and n_free <= solver.BRUTE_FORCE_LIMIT:
        ok, line = _gap_line(oracle_gap(cfg, "linear"))
        print(f"oracle (linear): {line}")
        if not ok:
            return 1
    return 0


def _nonlinear_job(args):
    cfg, eps = args
    return _evolve(cfg, "nonlinear", eps)


def cmd_ladder(args, cfg: RunConfig) -> int:
    out = _outdir(args, cfg)
    ref = _evolve(cfg, "linear")
    jobs = [(cfg, e) for e in cfg.ladder]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_nonlinear_job, jobs))
    else:
        runs = [_nonlinear_job(j) for j in jobs]
    report = linearize.convergence_report(runs, ref, cfg.sample_times)
    if cfg.output.trajectory:
        io.write_trajectory(ref, out / "trajectory_linear.json")
        for e, r in zip(cfg.ladder, runs):
            io.write_trajectory(r, out / f"trajectory_nonlinear_eps{e:g}.json")
    if cfg.output.report:
        path = io.write_report(report, out / "convergence_report.csv")
        print(f"wrote {path}")
    for row in report.rows:
        print(
            f"eps={row['epsilon']:<8g} t={row['time']:<5g} total_gap={row['total_gap']:.3e} "
            f"hessian={row['hessian']:.3e} disp_error={row['disp_error_good']:.3e}"
        )
    return 0


def oracle_gap(cfg: RunConfig, model: str) -> float:
    """Largest relative gap between greedy and brute-force steps along a run."""
    mesh = build_mesh(cfg.grid)
    bp = cfg.program()
    p = cfg.params
    W = get_density(cfg.density)
    history = CrackHistory()
    prev = None
    if model == solver.NONLINEAR:
        prev = identity_field(mesh, cfg.initial_crack)
        prev.values += p.epsilon * bp.h(0.0, prev.values)
    worst = 0.0
    for t in solver.TimePartition(cfg.partition_level).times:
        t = float(t)
        A = bp.grad(t)
        fg, cg = solver.incremental_step(
            mesh, history, t, prev, model, p, cfg.solve, A, base_crack=cfg.initial_crack, density=W
        )
        _, _, Eb = solver.brute_force_step(
            mesh, history, t, model, p, A, cfg.solve, prev_field=prev, base_crack=cfg.initial_crack, density=W
        )
        gap = abs(fg.info["energy"].total - Eb.total) / max(abs(Eb.total), p.kappa * mesh.dx)
        worst = max(worst, gap)
        history = accumulate(history, t, CrackState(cg.broken - frozenset(cfg.initial_crack)))
        prev = fg
    return worst


def _gap_line(worst: float) -> tuple[bool, str]:
    ok = worst <= 1e-6
    return ok, f"max relative gap {worst:.3e} {'<=' if ok else '>'} 1e-6"


def cmd_oracle(args, cfg: RunConfig) -> int:
    models = ("linear", "nonlinear") if cfg.model == "both" else (cfg.model,)
    ok, line = _gap_line(max(oracle_gap(cfg, m) for m in models))
    print(line)
    return 0 if ok else 1


def cmd_check(args, cfg: RunConfig) -> int:
    out = _outdir(args, cfg)
    results = acceptance.run_all(set(args.only) if args.only else None)
    for r in results:
        print(r.line())
    path = io.write_summary(results, out / "check_summary.json")
    print(f"wrote {path}")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"simulate": cmd_simulate, "ladder": cmd_ladder, "oracle": cmd_oracle, "check": cmd_check}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(DEFAULTS_TOML)
        return 0
    if not args.command:
        _parser().print_help()
        return 2
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    except QsfracError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
