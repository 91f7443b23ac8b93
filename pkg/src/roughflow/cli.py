"""Command-line entry point: ``roughflow run`` and ``roughflow list``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .experiments import (
    EXIT_CONFIG,
    U64_MAX,
    ConfigError,
    list_scenarios,
    load_config,
    run,
)

OUTPUT_ROOT_ENV = "ROUGHFLOW_OUTPUT_ROOT"


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def default_output_dir(cfg, config_path):
    """``outputs.directory`` if set, else ``$ROUGHFLOW_OUTPUT_ROOT/<config stem>`` (root defaults to ``./runs``)."""
    if cfg.outputs.directory:
        return Path(cfg.outputs.directory)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / Path(config_path).stem


def build_parser():
    p = argparse.ArgumentParser(prog="roughflow", description="Stochastic flows with rough drift: experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the scenario described by a TOML config")
    r.add_argument("--config", required=True, help="TOML configuration file")
    r.add_argument("--out", help=f"output directory (default: outputs.directory or ${OUTPUT_ROOT_ENV}/<config stem>)")
    r.add_argument("--seed", type=_u64, help="override numerics.seed (unsigned 64-bit)")
    r.add_argument("--workers", type=_positive, help="override numerics.workers")
    sub.add_parser("list", help="print the scenario catalog as JSON")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        json.dump(list_scenarios(), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return 0
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace_numerics(seed=args.seed)
        if args.workers is not None:
            cfg = cfg.replace_numerics(workers=args.workers)
    except (ConfigError, OSError) as e:
        print(f"roughflow: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else default_output_dir(cfg, args.config)
    try:
        outcome = run(cfg, out)
    except ConfigError as e:
        print(f"roughflow: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    verdict = "PASS" if outcome.status == 0 else ("ERROR" if outcome.error else "FAIL")
    print(f"{cfg.scenario}: {verdict} -> {outcome.directory}")
    for name, ok in outcome.checks.items():
        print(f"  {'ok  ' if ok else 'FAIL'} {name}")
    if outcome.error:
        print(f"roughflow: {outcome.error}", file=sys.stderr)
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
