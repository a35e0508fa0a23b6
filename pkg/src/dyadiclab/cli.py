"""Command line: ``dyadiclab {lattice build|lattice verify|sweep|check|plot}``.

Exit codes: 0 when everything passed, 1 when a check failed (the report is
still written), 2 for configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import DyadicLabError
from .haar import build_haar
from .io import haar_to_dict, lattice_to_dict, write_json
from .lattice import verify_lattice
from .measure import default_measure
from .sweep import build_lattice_from_config, emit_plots, run_checks, run_sweep

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML run configuration (built-in defaults when omitted)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, help="worker processes (overrides the config)")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadiclab", description="Dyadic lattices, Haar systems and weighted shift norms.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    lat = sub.add_parser("lattice", help="build or verify the configured lattice")
    lat_sub = lat.add_subparsers(dest="action", required=True)
    _common(lat_sub.add_parser("build", help="write lattice.json and haar.json"))
    _common(lat_sub.add_parser("verify", help="check the lattice axioms, write lattice_report.json"))

    _common(sub.add_parser("sweep", help="weighted norms over the grid: sweep.csv and summary.json"))
    _common(sub.add_parser("check", help="run the check suites: checks.json"))

    plot = sub.add_parser("plot", help="SVG plots from a sweep CSV")
    plot.add_argument("csv", help="sweep.csv written by the sweep command")
    plot.add_argument("--out", help="directory for the SVG files (default: next to the CSV)")
    return parser


def _out_dir(cfg, args) -> Path:
    out = Path(args.out) if args.out else cfg.resolve(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run(args) -> int:
    if args.command == "plot":
        paths = emit_plots(args.csv, args.out)
        for p in paths:
            print(p)
        return EXIT_OK

    cfg = load_config(args.config).with_overrides(threads=args.threads, seed=args.seed)
    out = _out_dir(cfg, args)

    if args.command == "lattice":
        lat = build_lattice_from_config(cfg)
        if args.action == "build":
            write_json(lattice_to_dict(lat), out / "lattice.json")
            write_json(haar_to_dict(build_haar(lat, default_measure(lat))), out / "haar.json")
            print(f"{lat.kind} lattice: depth {lat.depth}, {lat.n_cubes} cubes, {lat.n_cells} cells -> {out}")
            return EXIT_OK
        rep = verify_lattice(lat)
        write_json(rep.to_dict(), out / "lattice_report.json")
        for r in rep.records:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.check}  {r.detail}".rstrip())
        return EXIT_OK if rep.passed else EXIT_FAILED

    if args.command == "sweep":
        rows, summary = run_sweep(cfg, out)
        print(f"{len(rows)} rows, {summary['failedRows']} failed, slopes {summary['slopeRange']}, "
              f"max exponent {summary['exponentMax']} -> {out}")
        return EXIT_FAILED if summary["failedRows"] or summary["unconverged"] else EXIT_OK

    report = run_checks(cfg, out)
    for name, s in report["suites"].items():
        worst = s["worst"]["ratio"] if s["worst"] else None
        print(f"{'PASS' if s['passed'] else 'FAIL'}  {name}: {s['records']} records, "
              f"{s['failures']} failures, worst ratio {worst}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _run(args)
    except (DyadicLabError, OSError) as e:
        print(f"dyadiclab: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
