"""Command line front end over the stage chain.

Exit codes: 0 success, 1 configuration, 2 solver, 3 modulation,
4 analysis/comparison.  A full `pipeline` run additionally returns 0 only
when every enabled acceptance check passes.
"""

import argparse
import sys

from .errors import ConfigError, FlowError
from .config import load_config
from .pipeline import STAGES, enabled_stages, run_stage

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_MODULATION = 3
EXIT_ANALYSIS = 4

_STAGE_EXIT = {
    "simulate": EXIT_SOLVER,
    "estimate-extinction": EXIT_SOLVER,
    "normalize": EXIT_MODULATION,
    "modulate": EXIT_MODULATION,
    "analyze": EXIT_ANALYSIS,
    "linear-spectrum": EXIT_ANALYSIS,
    "oracle-compare": EXIT_ANALYSIS,
    "report": EXIT_ANALYSIS,
}

# subcommands named after their stages, plus the driver
_SUBCOMMANDS = STAGES + ("pipeline",)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fbcsf",
        description="Free-boundary curve shortening flow laboratory: "
                    "support-function solver, modulation, decay-rate "
                    "analysis, and a front-tracking cross-check.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage" if name in
                           STAGES else "run all enabled stages in order")
        p.add_argument("--config", required=True, metavar="PATH",
                       help="flat dotted-key config file")
        p.add_argument("--out", metavar="DIR", default=None,
                       help="output directory (default: output.dir)")
        p.add_argument("--strict", action="store_true",
                       help="treat warnings as errors")
        if name == "pipeline":
            p.add_argument("--stage", metavar="NAME", default=None,
                           help="run a single stage against existing "
                                "artifacts instead of the full chain")
    return parser


def _announce(stage, outcome, strict):
    for line in outcome.summary.splitlines():
        print(f"[{stage}] {line}")
    for w in outcome.warnings:
        print(f"[{stage}] warning: {w}", file=sys.stderr)
    if strict and outcome.warnings:
        print(f"[{stage}] strict mode: warnings are fatal", file=sys.stderr)
        return _STAGE_EXIT[stage]
    return EXIT_OK


def _execute(stage, cfg, outdir, strict):
    """Run one stage; returns (exit_code, outcome_or_None)."""
    try:
        outcome = run_stage(stage, cfg, outdir)
    except ConfigError as exc:
        print(f"[{stage}] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except (FlowError, ValueError) as exc:
        print(f"[{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return _STAGE_EXIT[stage], None
    return _announce(stage, outcome, strict), outcome


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code or 0
        return EXIT_CONFIG if code else EXIT_OK

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.out if args.out else cfg["output.dir"]

    if args.command != "pipeline":
        code, _ = _execute(args.command, cfg, outdir, args.strict)
        return code

    if args.stage is not None:
        if args.stage not in STAGES:
            print(f"unknown stage {args.stage!r}; choose from "
                  + ", ".join(STAGES), file=sys.stderr)
            return EXIT_CONFIG
        code, _ = _execute(args.stage, cfg, outdir, args.strict)
        return code

    flags = {}
    for stage in enabled_stages(cfg):
        code, outcome = _execute(stage, cfg, outdir, args.strict)
        if code != EXIT_OK:
            return code
        flags.update(outcome.flags)
    failing = sorted(k for k, v in flags.items() if not v)
    if failing:
        print("acceptance: FAIL (" + ", ".join(failing) + ")",
              file=sys.stderr)
        return EXIT_ANALYSIS
    print(f"acceptance: ok ({len(flags)} checks)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
