"""Command-line entry point: ``pdhp identify | train | simulate | compare | verify | run``.

Exit codes: 0 success, 1 check or experiment failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .archive import ArchiveError, ModelArchive
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import (METHODS, ExperimentError, compare, config_from_archive, identify,
                         simulate_method, train, write_summary, write_trajectories)
from .gaussian_algebra import KNOWN_FAULTS, injected_fault
from .trainer import PhaseFailure
from .verify import CHECKS, format_table, run_checks

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _config(path) -> ExperimentConfig:
    return ExperimentConfig().validate() if path is None else load_config(path)


def _load_archive(path) -> ModelArchive:
    if not Path(path).is_file():
        raise UsageError(f"archive {path} does not exist")
    return ModelArchive.load(path)


def cmd_identify(args) -> int:
    cfg = _config(args.config)
    res = identify(cfg)
    res.archive.save(args.archive)
    sigma = res.model.sigma
    print(f"Sigma = {sigma[0, 0]:.6g}" if sigma.size == 1 else f"Sigma =\n{sigma}")
    print(f"held-out RMS = {res.heldout_rms:.6g}")
    print(f"wrote {args.archive}")
    return EXIT_OK


def cmd_train(args) -> int:
    arc = _load_archive(args.archive)
    cfg = _config(args.config) if args.config else config_from_archive(arc)
    run = train(arc, args.method, cfg)
    arc.save(args.archive)
    run.write_log(args.out)
    for ph in run.phases:
        print(f"cycle {ph.cycle} {ph.phase:<6} iterations={ph.iterations:<5} "
              f"objective {ph.initial_objective:.4g} -> {ph.final_objective:.4g}")
    print(f"Gamma = {run.controller.gamma.ravel()}")
    print(f"wrote {args.archive} and {args.out}")
    return EXIT_OK


def _plot(path, blocks) -> None:
    from .plotting import plot_trajectories

    plot_trajectories(path, blocks)
    print(f"wrote {path}")


def _check_steps(steps: int) -> None:
    if steps < 1:
        raise UsageError("--steps must be at least 1")


def cmd_simulate(args) -> int:
    _check_steps(args.steps)
    arc = _load_archive(args.archive)
    blocks = [(simulate_method(arc, args.method, args.x0, args.steps, s), args.method)
              for s in args.seed]
    write_trajectories(args.out, blocks)
    for traj, _ in blocks:
        print(f"seed {traj.seed}: final |x| = {abs(traj.states[-1, 0]):.4g}")
    if args.plot:
        _plot(args.plot, blocks)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    _check_steps(args.steps)
    arc_p = _load_archive(args.archive_prob)
    arc_d = _load_archive(args.archive_dhp)
    cfg = config_from_archive(arc_p)
    seeds = args.seeds if args.seeds else cfg.eval_seeds()
    comp = compare(arc_p, arc_d, args.x0, args.steps, seeds, args.band, cfg.eval.workers)
    write_summary(args.out, comp)
    if args.trajectories or args.plot:
        blocks = [(comp.trajectories[k], k[0]) for k in sorted(comp.trajectories)]
        if args.trajectories:
            write_trajectories(args.trajectories, blocks)
        if args.plot:
            _plot(args.plot, blocks)
    for m in METHODS:
        print(f"{m}: mean overshoot {comp.mean_overshoot(m):.4g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.config:
        cfg = _config(args.config)
        seed = cfg.seed
    else:
        seed = 0
    unknown = [c for c in (args.check or []) if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    if args.inject_fault:
        with injected_fault(args.inject_fault):
            results = run_checks(args.check, seed)
    else:
        results = run_checks(args.check, seed)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_run(args) -> int:
    """identify, train both methods and compare, writing everything into ``--out``."""
    cfg = _config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = identify(cfg)
    print(f"Sigma = {res.model.sigma[0, 0]:.6g}, held-out RMS = {res.heldout_rms:.6g}")
    archives = {}
    for method in METHODS:
        arc = ModelArchive.loads(res.archive.dumps())
        run = train(arc, method, cfg)
        arc.save(out / f"{method}.archive")
        run.write_log(out / f"training_log_{method}.csv")
        archives[method] = arc
        print(f"trained {method}: Gamma = {run.controller.gamma.ravel()}")
    comp = compare(archives["prob"], archives["dhp"], cfg.eval.x0, cfg.eval.steps,
                   cfg.eval_seeds(), cfg.eval.band, cfg.eval.workers)
    write_summary(out / "compare_summary.csv", comp)
    blocks = [(comp.trajectories[k], k[0]) for k in sorted(comp.trajectories)]
    write_trajectories(out / "trajectory.csv", blocks)
    if args.plot:
        _plot(args.plot, blocks)
    for m in METHODS:
        print(f"{m}: mean overshoot {comp.mean_overshoot(m):.4g}")
    print(f"wrote results to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdhp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("identify", help="fit the forward model and start an archive")
    s.add_argument("--config", help="key=value config file (defaults to the benchmark)")
    s.add_argument("--archive", required=True, help="archive to write")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("train", help="train controller and critic into an archive")
    s.add_argument("--config", help="override the config stored in the archive")
    s.add_argument("--archive", required=True)
    s.add_argument("--method", choices=METHODS, default="prob")
    s.add_argument("--out", default="training_log.csv", help="training log CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="closed-loop rollout of a trained controller")
    s.add_argument("--archive", required=True)
    s.add_argument("--method", choices=METHODS, default="prob")
    s.add_argument("--x0", type=float, default=2.0)
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--seed", type=int, nargs="+", default=[1000])
    s.add_argument("--out", default="trajectory.csv")
    s.add_argument("--plot", help="optional SVG of the trajectories")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare", help="paired rollouts of the probabilistic and DHP controllers")
    s.add_argument("--archive-prob", required=True)
    s.add_argument("--archive-dhp", required=True)
    s.add_argument("--x0", type=float, default=2.0)
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--seeds", type=int, nargs="+", help="defaults to the archived eval seeds")
    s.add_argument("--band", type=float, default=0.3, help="settling band on |x|")
    s.add_argument("--out", default="compare_summary.csv")
    s.add_argument("--trajectories", help="also write all trajectories to this CSV")
    s.add_argument("--plot", help="optional SVG of the trajectories")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("verify", help="run the self-check table")
    s.add_argument("--config")
    s.add_argument("--check", action="append", help=f"one of: {', '.join(CHECKS)} (repeatable)")
    s.add_argument("--inject-fault", choices=KNOWN_FAULTS, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("run", help="identify, train both methods and compare")
    s.add_argument("--config")
    s.add_argument("--out", default="results", help="output directory")
    s.add_argument("--plot", help="optional SVG of the trajectories")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ArchiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExperimentError, PhaseFailure, FloatingPointError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
