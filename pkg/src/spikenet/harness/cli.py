"""Command-line entry point ``snn``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config, resolve
from .experiments import ExperimentError, run_experiment
from .reports import ReportError, emit_plot_data

# subcommand -> experiment tags it accepts
COMMANDS = {
    "train-ann": ("train-ann",),
    "convert": ("convert-rate", "convert-ttfs"),
    "simulate": ("simulate",),
    "sample": ("sample",),
    "oracle-check": ("oracle-check",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snn", description="Spiking neural network experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON) or a run manifest")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        if name == "convert":
            p.add_argument("--encoding", choices=("poisson", "analog"))
    p = sub.add_parser("plot-data", help="reshape report CSVs into long-format plot tables")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", required=True)
    return parser


def _load(path):
    """Accept either a config document or a manifest from an earlier run."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError:
            doc = None
    if isinstance(doc, dict) and "config" in doc and "versions" in doc:
        return resolve(doc["config"], None, f"{path}:config")
    return load_config(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "plot-data":
        try:
            for p in emit_plot_data(args.csv, args.out):
                print(p)
        except (ReportError, OSError) as exc:
            print(f"error [plot-data]: {exc}", file=sys.stderr)
            return 2
        return 0

    try:
        cfg = _load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    if cfg["experiment"] not in COMMANDS[args.command]:
        print(f"error [config]: experiment {cfg['experiment']!r} cannot run under '{args.command}'", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "encoding", None):
        if cfg["experiment"] != "convert-rate":
            print("error [config]: --encoding applies to convert-rate only", file=sys.stderr)
            return 2
        cfg["conversion"]["encodings"] = [args.encoding]
    if args.out:
        cfg["output_dir"] = args.out

    try:
        result = run_experiment(cfg)
    except ExperimentError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    for p in result.outputs:
        print(p)
    print(result.manifest)
    if not result.ok:
        print("error [check]: one or more checks failed; see the reports", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
