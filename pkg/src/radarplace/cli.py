"""Command-line interface.

Subcommands: synth, preprocess, train, index, query, evaluate, ablate.
Configuration comes from an INI-style file (see `radarplace <cmd> --help`),
with `--set section.key=value` flags winning over file values.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set RADARPLACE_LOG=debug|info|warning to control verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .encoder import TrainingDiverged
from .pipeline import (ConfigError, MissingStageError, load_config, run_ablate,
                       run_evaluate, run_index, run_preprocess, run_query,
                       run_synth, run_train)
from .scanio import DatasetFormatError, SplitError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="radarplace",
                     description="Automotive-radar place recognition pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate a synthetic benchmark dataset"),
        ("preprocess", "dynamic-point masks, splits, BEV images, RCS histograms"),
        ("train", "train the spatial-temporal descriptor network"),
        ("index", "build the place index from the database split"),
        ("query", "retrieve ranked candidates for the query split"),
        ("evaluate", "score retrieval results (recall@N, PR, maxF1, AP)"),
        ("ablate", "run the full toggle grid and emit a summary table"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", default=None,
                       help="INI config file (defaults used when omitted)")
        p.add_argument("--set", "-s", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override a config value; repeatable")
        if name == "query":
            p.add_argument("--split", choices=["test", "validation"],
                           default="test", help="query split to run")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("RADARPLACE_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, args.set)
    except (ConfigError, ValueError) as exc:
        print(f"radarplace: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "synth":
            run_synth(cfg)
        elif args.command == "preprocess":
            run_preprocess(cfg)
        elif args.command == "train":
            run_train(cfg)
        elif args.command == "index":
            run_index(cfg)
        elif args.command == "query":
            run_query(cfg, query_split=args.split)
        elif args.command == "evaluate":
            run_evaluate(cfg)
        elif args.command == "ablate":
            run_ablate(cfg)
    except (DatasetFormatError, SplitError, MissingStageError,
            FileNotFoundError) as exc:
        print(f"radarplace: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"radarplace: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
