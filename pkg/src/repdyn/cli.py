"""Command-line entry point: ``repdyn <command> --config PATH [--jobs N] [--out DIR] [--seed N]``."""

import argparse
import os
import sys

from . import experiments, svg, verify
from ._accel import backend_name
from .config import build_config
from .errors import ConfigError

COMMANDS = {
    "convergence": experiments.run_convergence,
    "random-cumulants": experiments.run_random_cumulants,
    "rotating": experiments.run_rotating,
}


def _parser():
    p = argparse.ArgumentParser(prog="repdyn", description="Representation dynamics of MC, TD and residual auxiliary tasks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "verify"):
        s = sub.add_parser(name)
        s.add_argument("--config", metavar="PATH", help="key=value config file with [section] headers")
        s.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes (default: CPU count)")
        s.add_argument("--out", metavar="DIR", help="output directory")
        s.add_argument("--seed", type=int, help="base seed (overrides config and REPDYN_SEED)")
        if name == "verify":
            s.add_argument("--filter", default=None, help="comma-separated groups or check names, e.g. 'bounds'")
        else:
            s.add_argument("--steps", type=int, help="training steps (overrides config)")
            s.add_argument("--n-seeds", type=int, dest="n_seeds", help="number of seeds (overrides config)")
    plot = sub.add_parser("plot", help="regenerate SVG figures from the CSV files in a directory")
    plot.add_argument("--out", metavar="DIR", default="out")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "plot":
        for path in svg.plot_directory(args.out):
            print(path)
        return 0
    overrides = {"out": args.out, "seed": args.seed}
    if args.command == "verify":
        overrides["filter"] = args.filter
    else:
        overrides.update(steps=args.steps, n_seeds=args.n_seeds)
    try:
        cfg = build_config(args.command, args.config, overrides)
    except ConfigError as exc:
        print(f"repdyn: config error: {exc}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("repdyn: --jobs must be at least 1", file=sys.stderr)
        return 2

    if args.command == "verify":
        try:
            results = verify.run(cfg.filter)
        except ValueError as exc:
            print(f"repdyn: {exc}", file=sys.stderr)
            return 2
        report = verify.format_report(results)
        sys.stdout.write(report)
        if args.out:
            os.makedirs(cfg.out, exist_ok=True)
            with open(os.path.join(cfg.out, "verify_report.txt"), "w") as fh:
                fh.write(report)
        return 0 if all(r.passed for r in results) else 1

    print(f"repdyn {args.command}: backend={backend_name()} jobs={args.jobs} out={cfg.out}", file=sys.stderr)
    outputs = COMMANDS[args.command](cfg, cfg.out, jobs=args.jobs)
    for path in outputs if isinstance(outputs, list) else [outputs]:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
