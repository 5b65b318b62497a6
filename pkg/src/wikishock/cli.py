"""Command-line entry point: ``wikishock {ingest,changepoints,did,plot,all}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .did import VARIANTS
from .dump import DumpFormatError
from .metrics import OrderingError
from .mobility import MobilityFormatError
from .pipeline import MissingInputError, run_changepoints, run_did, run_ingest, run_plot

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("wikishock")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="pipeline config (JSON)")
    common.add_argument("--languages", help="comma-separated subset of configured languages")
    common.add_argument("--variant", choices=VARIANTS, help="run only this estimation variant")
    common.add_argument("--refresh", action="store_true", help="bypass the REST response cache")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="wikishock", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="dumps -> daily metrics CSVs")
    sub.add_parser("changepoints", parents=[common], help="mobility -> changepoints JSON")
    sub.add_parser("did", parents=[common], help="metrics + changepoints -> effects CSVs")
    sub.add_parser("plot", parents=[common], help="results -> SVG figures")
    sub.add_parser("all", parents=[common], help="run every stage in order")
    return ap


def run(args) -> int:
    cfg = load_config(args.config)
    if args.languages:
        cfg = cfg.subset([c.strip() for c in args.languages.split(",") if c.strip()])
    out = args.out if args.out is not None else cfg.resolve(cfg.output_dir)
    variants = [args.variant] if args.variant else None

    stages = {
        "ingest": lambda: run_ingest(cfg, out, refresh=args.refresh),
        "changepoints": lambda: run_changepoints(cfg, out),
        "did": lambda: run_did(cfg, out, variants),
        "plot": lambda: run_plot(cfg, out),
    }
    order = list(stages) if args.command == "all" else [args.command]
    partial = False
    for name in order:
        res = stages[name]()
        for e in res.errors:
            log.warning("%s: %s", name, e)
        for p in res.outputs:
            log.info("%s: wrote %s", name, p)
        partial = partial or res.partial
    return EXIT_PARTIAL if partial else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except (
        ConfigError,
        MissingInputError,
        DumpFormatError,
        MobilityFormatError,
        OrderingError,
        OSError,
    ) as exc:
        log.error("%s", exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
