"""Command-line entry point: experiment sweeps and the numerical check suite.

Each experiment subcommand resolves a config (file, then flag overrides),
runs the sweep, and writes ``<experiment>.csv`` plus ``<experiment>.json``
metadata into the output directory.  ``validate`` runs the numerical
cross-check suite and fails the process if any check is red.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config, paper_scale
from .harness import run_experiment, write_metadata
from .validate import run_all_checks

COMMAND_KINDS = {
    "nmse-snr": "nmse_vs_snr",
    "nmse-kappa": "nmse_vs_kappa",
    "rate-snr": "rate_vs_snr",
    "rate-tr": "rate_vs_tr",
    "rate-l": "rate_vs_l",
}


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.paper_scale:
        config = paper_scale(config)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    return dataclasses.replace(config, **overrides) if overrides else config


def _run_sweep(args) -> int:
    kind = COMMAND_KINDS[args.command]
    config = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = run_experiment(config, kind, workers=args.workers)
    csv_path = out_dir / f"{kind}.csv"
    meta_path = out_dir / f"{kind}.json"
    table.write_csv(csv_path)
    write_metadata(table, config, meta_path)
    print(f"wrote {csv_path}")
    print(f"wrote {meta_path}")
    for note in table.warnings:
        print(f"note: {note}", file=sys.stderr)
    return 0


def _run_validate(args) -> int:
    results = run_all_checks(args.seed if args.seed is not None else 0)
    for result in results:
        print(result.line())
    return 0 if all(result.passed for result in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lisim",
        description="Two-stage channel estimation and reflector phase design simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="YAML config file; unset keys keep defaults")
    shared.add_argument("--out", default="results", help="output directory (default: results)")
    shared.add_argument("--seed", type=int, help="override the base seed")
    shared.add_argument("--trials", type=int, help="override trials per sweep point")
    shared.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    shared.add_argument(
        "--paper-scale",
        action="store_true",
        help="scale arrays and training up to the full published dimensions",
    )

    descriptions = {
        "nmse-snr": "estimation error of all links against operating SNR",
        "nmse-kappa": "estimation error against reflector/AP channel conditioning",
        "rate-snr": "achievable rate of all schemes against operating SNR",
        "rate-tr": "achievable rate against reflected-stage training length",
        "rate-l": "achievable rate against reflector element count",
    }
    for command, kind in COMMAND_KINDS.items():
        cmd = sub.add_parser(command, parents=[shared], help=descriptions[command])
        cmd.set_defaults(func=_run_sweep)

    val = sub.add_parser("validate", help="run the numerical cross-check suite")
    val.add_argument("--seed", type=int, help="base seed for the check instances")
    val.set_defaults(func=_run_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
