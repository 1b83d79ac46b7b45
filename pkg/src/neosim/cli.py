"""Command-line interface: run one simulation, sweep a grid, or validate a
configuration file."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .config import ConfigError, dump_config, load_config
from .engine import SimulationError
from .experiments import (BUILTIN_SCENARIOS, ScenarioConfig, builtin_scenario,
                          ensure_writable, expand_cells, run_scenario, sweep,
                          write_outputs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neosim",
        description="Multi-lane highway simulation of connected lane-change "
                    "strategies around incidents.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(sp: argparse.ArgumentParser) -> None:
        group = sp.add_mutually_exclusive_group(required=True)
        group.add_argument("--config", metavar="PATH",
                           help="YAML scenario configuration file")
        group.add_argument("--scenario", metavar="NAME",
                           choices=BUILTIN_SCENARIOS,
                           help="builtin scenario preset "
                                f"({', '.join(BUILTIN_SCENARIOS)})")

    p_run = sub.add_parser("run", help="execute one simulation")
    add_source(p_run)
    p_run.add_argument("--out", metavar="DIR", default="out",
                       help="output directory (used for --trace)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="run seed (default: the scenario's sim seed)")
    p_run.add_argument("--trace", action="store_true",
                       help="write a per-step JSONL trace")

    p_sweep = sub.add_parser("sweep", help="execute the full experiment grid")
    add_source(p_sweep)
    p_sweep.add_argument("--out", metavar="DIR", default="out",
                         help="output directory for runs.csv and summary.txt")
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="override the scenario's base seed")
    p_sweep.add_argument("--workers", type=int, default=1,
                         help="parallel worker processes")
    p_sweep.add_argument("--trace", action="store_true",
                         help="write a per-step JSONL trace for every run")

    p_val = sub.add_parser("validate",
                           help="check a configuration and print its "
                                "normalized form")
    add_source(p_val)
    return parser


def _load_scenario(args) -> ScenarioConfig:
    if args.config is not None:
        return load_config(args.config)
    return builtin_scenario(args.scenario)


def _print_metrics(m) -> None:
    print(f"scenario={m.scenario} model={m.model} inflow={m.inflow:g} "
          f"p_cav={m.p_cav:g} sigma_x={m.sigma_x:g} sigma_v={m.sigma_v:g}")
    print(f"seed={m.seed}")
    print(f"mean_speed_all={m.mean_speed_all:.6g}")
    if m.mean_speed_cav is None:
        print("mean_speed_cav=-")
    else:
        print(f"mean_speed_cav={m.mean_speed_cav:.6g}")
    print(f"offramp_attempts={m.offramp_attempts}")
    print(f"offramp_failures={m.offramp_failures}")
    print(f"wall_time={m.wall_time:.3f}")


def _cmd_run(args) -> int:
    cfg = _load_scenario(args)
    seed = args.seed if args.seed is not None else cfg.sim.seed
    fh = None
    hook = None
    if args.trace:
        ensure_writable(args.out)
        path = os.path.join(args.out, "trace.jsonl")
        fh = open(path, "w", encoding="utf-8", newline="")
        hook = lambda rec: fh.write(json.dumps(rec) + "\n")
    try:
        metrics = run_scenario(cfg, seed, trace_hook=hook)
    finally:
        if fh is not None:
            fh.close()
    _print_metrics(metrics)
    if args.trace:
        print(f"trace={os.path.join(args.out, 'trace.jsonl')}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_scenario(args)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    ensure_writable(args.out)
    trace_dir = os.path.join(args.out, "traces") if args.trace else None
    result = sweep(cfg, workers=args.workers, trace_dir=trace_dir)
    csv_path, summary_path = write_outputs(result, args.out)
    print(f"runs={len(result.runs)} failed={len(result.failures)}")
    print(f"csv={csv_path}")
    print(f"summary={summary_path}")
    if result.failures:
        print(f"warning: {len(result.failures)} runs aborted; see summary",
              file=sys.stderr)
    return 0


def _cmd_validate(args) -> int:
    cfg = _load_scenario(args)
    cells = expand_cells(cfg)
    print(f"ok scenario={cfg.name} cells={len(cells)} n_runs={cfg.n_runs} "
          f"total_runs={len(cells) * cfg.n_runs}")
    sys.stdout.write(dump_config(cfg))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_validate(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SimulationError as e:
        print(f"simulation aborted: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
