"""Command-line surface: run sweeps, optimize parameters, dump tap tables.

Diagnostics go to stderr; results only to the --out artifact.  Exit code
0 on success, 1 with a single-line `error: ...` message otherwise.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .channel import build_taps
from .config import ConfigError, load_preset, parse_config, preset_names
from .equalization import derivative_taps
from .harness import optimize_parameter, sweep
from .modulation import grid_for_scheme
from .results import emit_results

THREADS_ENV = "DIMCSIM_THREADS"


def _load_config(args):
    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise ConfigError(["cli: give either --config or --preset, not both"])
    if getattr(args, "preset", None):
        return load_preset(args.preset)
    if getattr(args, "config", None):
        return parse_config(Path(args.config).read_text())
    raise ConfigError(["cli: one of --config or --preset is required"])


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _cmd_run(args) -> int:
    config = _load_config(args)
    seed = args.seed if args.seed is not None else config.seed
    print(
        f"running sweep over {config.sweep_axis} "
        f"({len(config.sweep_grid)} points, {len(config.links)} links, seed {seed})",
        file=sys.stderr,
    )
    reports = sweep(
        config,
        seed=seed,
        max_workers=args.threads,
        progress=lambda msg: print(f"  {msg}", file=sys.stderr),
    )
    Path(args.out).write_text(emit_results(reports, include_runtime=args.timings))
    print(f"wrote {len(reports)} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_optimize(args) -> int:
    config = _load_config(args)
    values, ber = optimize_parameter(config, args.param, seed=args.seed)
    lines = [f"{k} = {v:.10g}" for k, v in sorted(values.items())]
    lines.append(f"ber = {ber:.6e}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"optimized {args.param}; wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_taps(args) -> int:
    config = _load_config(args)
    link = config.links[0]
    grid = grid_for_scheme(link.scheme(), config.t_b, config.n, config.memory, tau=0.0)
    taps = build_taps(config.geometry, grid)
    orders = [derivative_taps(taps, m) for m in range(args.m + 1)]
    t = (np.arange(grid.num_taps) + 1) * grid.t_sample
    header = "t," + ",".join(f"m{m}" for m in range(args.m + 1))
    rows = [header]
    for i in range(grid.num_taps):
        rows.append(f"{t[i]:.10g}," + ",".join(f"{col[i]:.10e}" for col in orders))
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"wrote {grid.num_taps} taps (orders 0..{args.m}) to {args.out}", file=sys.stderr)
    return 0


def _cmd_list_presets(_args) -> int:
    for name in preset_names():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dimcsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a BER sweep and write a CSV")
    run.add_argument("--config", help="configuration file path")
    run.add_argument("--preset", help="shipped preset id (see list-presets)")
    run.add_argument("--seed", type=int, default=None, help="master seed override")
    run.add_argument("--out", required=True, help="output CSV path")
    run.add_argument("--threads", type=int, default=_default_threads(), help="worker processes")
    run.add_argument("--timings", action="store_true", help="record wall-clock runtimes in the CSV")
    run.set_defaults(func=_cmd_run)

    opt = sub.add_parser("optimize", help="search one tunable of a single-link config")
    opt.add_argument("--config", help="configuration file path")
    opt.add_argument("--preset", help="shipped preset id")
    opt.add_argument("--param", required=True, choices=("gamma", "alpha", "order", "ab"))
    opt.add_argument("--seed", type=int, default=None)
    opt.add_argument("--out", required=True, help="output path for key = value lines")
    opt.set_defaults(func=_cmd_optimize)

    taps = sub.add_parser("taps", help="emit tap and derivative-tap tables")
    taps.add_argument("--config", help="configuration file path")
    taps.add_argument("--preset", help="shipped preset id")
    taps.add_argument("--m", type=int, default=0, help="highest derivative order column")
    taps.add_argument("--out", required=True, help="output CSV path")
    taps.set_defaults(func=_cmd_taps)

    lst = sub.add_parser("list-presets", help="list shipped preset ids")
    lst.set_defaults(func=_cmd_list_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
