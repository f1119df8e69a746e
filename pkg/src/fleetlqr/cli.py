"""Command line front end: run experiments, self-check, inspect fleets."""

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from ._kernels import backend_name
from .errors import ConfigError, FleetLqrError
from .fleet import excitation_level
from .harness import (
    BASELINE_SENTINEL,
    ExperimentConfig,
    build_fleet_for,
    fit_growth_exponent,
    parse_config,
    run_experiment,
)


def _load_config(path):
    return parse_config(path) if path else ExperimentConfig()


def _cmd_run(args):
    cfg = _load_config(args.config)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    curves = run_experiment(cfg, workers=args.workers)
    print(f"backend: {backend_name()}")
    for c in curves:
        label = "baseline (H=1)" if c.h == BASELINE_SENTINEL else f"H={c.h}"
        try:
            exp = fit_growth_exponent(c)
            exp_txt = f"{exp:.3f}" if exp is not None else "n/a (nonpositive regret)"
        except FleetLqrError:
            exp_txt = "n/a (short grid)"
        print(
            f"{label}: final regret {c.mean[-1]:.6g} +/- {c.stderr[-1]:.3g} "
            f"({c.n_seeds} seeds), trailing exponent {exp_txt}"
        )
    print(f"wrote {cfg.output_dir}/regret.csv and {cfg.output_dir}/diagnostics.csv")
    return 0


def _cmd_check(args):
    from . import selfcheck  # deferred: imports most of the package

    results = selfcheck.run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    n_bad = sum(1 for _, ok, _ in results if not ok)
    print(f"{len(results) - n_bad}/{len(results)} checks passed")
    return 0 if n_bad == 0 else 1


def _cmd_fleet_info(args):
    cfg = _load_config(args.config)
    seed = cfg.seeds[0]
    for h in cfg.h_values:
        fleet = build_fleet_for(cfg, h, seed)
        levels = [
            excitation_level(fleet.basis.phi, fleet.k0[i])
            for i in range(fleet.n_agents)
        ]
        print(
            f"H={h} (seed {seed}): d_x={fleet.d_x} d_u={fleet.d_u} "
            f"d_theta={fleet.basis.d_theta}"
        )
        print(
            f"  excitation alpha^2 under initial gains: "
            f"min {min(levels):.6g}, median {float(np.median(levels)):.6g}, "
            f"max {max(levels):.6g}"
        )
    return 0


def _cmd_bench(args):
    from . import bench  # deferred: warmup compiles kernels

    rows = bench.run_bench(
        rollout_steps=args.steps, dfw_agents=args.agents, repeats=args.repeats
    )
    print(bench.format_bench(rows))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fleetlqr",
        description="Multi-task adaptive LQR simulator with a shared learned representation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment and write CSVs")
    p_run.add_argument("--config", help="key=value config file (defaults used if omitted)")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--workers", type=int, help="thread count (overrides env/config)")
    p_run.set_defaults(fn=_cmd_run)

    p_check = sub.add_parser("check", help="run built-in invariant and oracle checks")
    p_check.set_defaults(fn=_cmd_check)

    p_info = sub.add_parser("fleet-info", help="print fleet dimensions and excitation levels")
    p_info.add_argument("--config", help="key=value config file (defaults used if omitted)")
    p_info.set_defaults(fn=_cmd_fleet_info)

    p_bench = sub.add_parser("bench", help="time jitted kernels against fallbacks")
    p_bench.add_argument("--steps", type=int, default=200000, help="rollout benchmark steps")
    p_bench.add_argument("--agents", type=int, default=100, help="dfw benchmark fleet size")
    p_bench.add_argument("--repeats", type=int, default=3, help="timing repetitions")
    p_bench.set_defaults(fn=_cmd_bench)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FleetLqrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
