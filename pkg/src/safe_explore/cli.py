"""Command-line entry points: run one campaign, sweep, or aggregate CSVs.

Exit codes: 0 success, 2 configuration problems, 3 numerical aborts
(partial results are still written, flagged incomplete).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .environments import EnvironmentNumericalError, SeedRedrawError
from .gp import NumericalDegeneracyError
from .harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    read_run_csv,
    run_campaign,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SEED_ENV_VAR = "SAFE_EXPLORE_SEED"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safe-explore",
        description="Safe-exploration campaigns against hidden constraint oracles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single campaign and write run.csv")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--method", default=None, help="override the method name")
    run.add_argument("--iterations", type=int, default=None)

    sweep = sub.add_parser("sweep", help="run replications x methods, write runs + summary")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", default=".")
    sweep.add_argument("--iterations", type=int, default=None)

    report = sub.add_parser("report", help="aggregate run CSVs into a summary table")
    report.add_argument("--in", dest="inputs", nargs="+", required=True)
    report.add_argument("--out", default=".")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV_VAR):
        try:
            seed = int(os.environ[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if getattr(args, "iterations", None) is not None:
        cfg = replace(cfg, iterations=args.iterations)
    if getattr(args, "method", None) is not None:
        cfg = replace(cfg, method={**cfg.method, "name": args.method}, methods=())
    return cfg


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "run":
            cfg = _load_config(args)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            record = run_campaign(cfg)
            record.to_csv(out / "run.csv")
            if record.incomplete:
                print(f"run aborted after {len(record)} iterations; "
                      f"partial record at {out / 'run.csv'}", file=sys.stderr)
                return EXIT_NUMERICAL
            print(out / "run.csv")
            return EXIT_OK
        if args.command == "sweep":
            cfg = _load_config(args)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            records = []
            incomplete = False
            for method_cfg in cfg.method_list():
                mcfg = replace(cfg, method=method_cfg, run_id=None)
                for rep in range(cfg.replications):
                    rec = run_campaign(mcfg, replication=rep)
                    rec.to_csv(out / f"run_{method_cfg['name']}_r{rep}.csv")
                    incomplete = incomplete or rec.incomplete
                    records.append(rec)
            aggregate(records, out / "summary.csv")
            print(out / "summary.csv")
            return EXIT_NUMERICAL if incomplete else EXIT_OK
        if args.command == "report":
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            records = [read_run_csv(p) for p in args.inputs]
            aggregate(records, out / "summary.csv")
            print(out / "summary.csv")
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalDegeneracyError, EnvironmentNumericalError, SeedRedrawError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(cli_main())
