"""Command line entry point: ``decayloc run|verify|export``."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .campaign import VIEWS, CampaignError, export_plotdata, run, verify, write_table
from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _error(kind: str, message: str, cell=None) -> int:
    json.dump({"status": "error", "error": kind, "message": message, "cell": cell}, sys.stderr)
    sys.stderr.write("\n")
    return EXIT_USAGE if kind == "ConfigError" else EXIT_FAILED


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    res = run(cfg, args.output, threads=args.threads, resume=args.resume)
    print(json.dumps({"status": "ok", "directory": res.directory, "cells": res.cells, "computed": res.computed,
                      "skipped": res.skipped}))
    return EXIT_OK


def _cmd_verify(args) -> int:
    report = verify(args.run_dir, args.sample_fraction)
    print(json.dumps(report, indent=1, default=str))
    return EXIT_OK if report["pass"] else EXIT_FAILED


def _cmd_export(args) -> int:
    rows = export_plotdata(args.run_dir, args.view)
    text = write_table(rows, args.out, args.format)
    if not args.out:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decayloc", description="Disorder campaigns for random Schroedinger "
                                "operators with a decaying envelope.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a campaign described by a YAML config")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="run directory (default: output.directory from the config)")
    r.add_argument("--threads", type=int, default=1, help="worker processes")
    r.add_argument("--resume", action="store_true", help="continue an interrupted run")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify", help="check integrity and invariants of a run directory")
    v.add_argument("run_dir")
    v.add_argument("--sample-fraction", type=float, default=0.1, help="fraction of cells to recompute")
    v.set_defaults(func=_cmd_verify)

    e = sub.add_parser("export", help="write a tidy table for plotting")
    e.add_argument("run_dir")
    e.add_argument("--view", required=True, choices=sorted(VIEWS))
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--out", help="output file (default: stdout)")
    e.set_defaults(func=_cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        return _error("ConfigError", "--threads must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _error("ConfigError", str(exc))
    except CampaignError as exc:
        return _error("CampaignError", str(exc), exc.cell)
    except (OSError, ValueError, RuntimeError) as exc:
        return _error(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
