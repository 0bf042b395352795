"""Command line entry point: ``nccz <subcommand> [--config FILE] [--output-dir DIR]``.

Exit codes: 0 when every verdict passes, 1 when a verdict fails or is
inconclusive, 2 on configuration errors (nothing is computed or written).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__

OUTPUT_ENV = "NCCZ_OUTPUT_DIR"
SUBCOMMANDS = {
    "check": None,
    "pseudoloc": "pseudoloc",
    "pseudoloc-lp": "pseudoloc-lp",
    "weaktype": "weaktype",
    "phipsi": "phipsi",
    "lpgrowth": "lpgrowth",
}
SCHEMA_HINT = (
    "config must be a JSON object with keys from ExperimentConfig, e.g. "
    '{"schema_version": 1, "K": 10, "d": 2, "kernel": "hilbert", "seed": 1, "s_values": [1, 2, 3]}'
)


class ConfigError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="nccz", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help="run the invariant suite" if name == "check" else f"run the {name} experiment")
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--output-dir", help=f"report directory (default: ${OUTPUT_ENV} or ./reports)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def load_config(name, path, seed, jobs):
    from .experiments import ExperimentConfig

    if path is None:
        cfg = ExperimentConfig.defaults(name)
        data = cfg.to_dict()
    else:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}. {SCHEMA_HINT}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}. {SCHEMA_HINT}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object. {SCHEMA_HINT}")
        base = ExperimentConfig.defaults(name).to_dict()
        base.update(data)
        base["experiment"] = name
        data = base
    if seed is not None:
        data["seed"] = seed
    data["jobs"] = jobs
    try:
        return ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}. {SCHEMA_HINT}") from exc


def _output_dir(arg):
    return arg or os.environ.get(OUTPUT_ENV) or os.path.join(os.getcwd(), "reports")


def run_check(out_dir):
    from .checks import run_checks
    from .sio import _atomic_write

    rows = run_checks()
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        print(f"{r['name']:<{width}}  {'PASS' if r['passed'] else 'FAIL'}  ({r['seconds']:.2f}s)")
    _atomic_write(os.path.join(out_dir, "check.json"), json.dumps(rows, indent=2, default=float) + "\n", mode="w")
    return 0 if all(r["passed"] for r in rows) else 1


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = _output_dir(args.output_dir)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    if args.command == "check":
        return run_check(out_dir)
    try:
        cfg = load_config(SUBCOMMANDS[args.command], args.config, args.seed, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    from .experiments import run

    report = run(cfg)
    paths = report.write(out_dir)
    for key, val in sorted(report.verdicts.items()):
        print(f"{key:<24} {val.upper()}")
    for path in paths:
        print(f"wrote {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
