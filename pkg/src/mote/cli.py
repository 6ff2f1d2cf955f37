"""Experiment-runner command line.

    mote run <config> [--seed-override S1,S2] [--out DIR]
                      [--paper-literal-gating] [--threads N]

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, parse_config
from .corpus import CorpusError
from .report import emit_report
from .runner import run_experiment

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mote",
        description="Temporal-adaptation experiments: mixture of temporal experts vs baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", help="path to a key=value experiment config")
    run.add_argument(
        "--seed-override",
        metavar="S1,S2,...",
        help="replace train.seeds with this comma-separated list",
    )
    run.add_argument("--out", metavar="DIR", help="override output.dir")
    run.add_argument(
        "--paper-literal-gating",
        action="store_true",
        help="mix experts with raw top-K softmax gates and a 1/K prefactor "
        "instead of renormalized gates",
    )
    run.add_argument("--threads", type=int, metavar="N", help="parallel seed runs")
    return parser


def _run(args: argparse.Namespace) -> int:
    try:
        cfg = parse_config(args.config)
        if args.seed_override:
            seeds = tuple(int(s) for s in args.seed_override.split(",") if s.strip())
            if not seeds:
                raise ConfigError("--seed-override needs at least one seed")
            cfg = replace(cfg, train=replace(cfg.train, seeds=seeds))
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.paper_literal_gating:
            cfg = replace(cfg, literal_gating=True)
        if args.threads:
            cfg = replace(cfg, threads=args.threads)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        report = run_experiment(cfg)
        written = emit_report(report, cfg.out_dir)
    except (CorpusError, OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    for method, row in report.averaged.items():
        rendered = "  ".join(f"{k}={v:.4f}" for k, v in row.items() if k in report.metrics)
        print(f"{method:>22s}  {rendered}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _run(args)
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
