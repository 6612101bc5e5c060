"""``fdcarleman`` command line.

Exit codes: 0 when every checked property holds, 1 when a property fails,
2 for invalid or infeasible input.
"""
import argparse
import json
import logging
import sys
import warnings

from . import experiments
from .config import ConfigError, load_config
from .exceptions import ConvergenceError

EXIT_OK, EXIT_PROPERTY, EXIT_INPUT = 0, 1, 2

COMMANDS = {
    "identities": experiments.run_identities,
    "control": experiments.run_control,
    "semilinear": experiments.run_semilinear,
    "decay-study": None,
    "audit": experiments.run_audit,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment file")
    common.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("--threads", type=int, metavar="N", help="worker pool size")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="fdcarleman",
                                     description="Fully discrete heat control experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _overrides(args):
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.out is not None:
        out["out"] = args.out
    if args.threads is not None:
        out["threads"] = args.threads
    return out


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        cfg = load_config(args.config, _overrides(args))
        rng = experiments.make_rng(cfg.seed)
        if args.command == "decay-study":
            passed, summary = experiments.run_decay_study(cfg)
        else:
            passed, summary = COMMANDS[args.command](cfg, rng)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not passed:
        if args.command == "identities":
            failed = summary["failures"]
        else:
            failed = sorted(k for k, c in summary["checks"].items() if not c["holds"])
        print(json.dumps({"command": args.command, "failed": failed}), file=sys.stderr)
        return EXIT_PROPERTY
    print(f"{args.command}: ok ({cfg.out})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
