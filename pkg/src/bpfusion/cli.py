"""
Command line entry point ``sense``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import METHODS, load_config
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sense", description="Multi-AP OFDM sensing fusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="dump a method's position spectrum over the prior box")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--out", required=True)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--points", type=int, default=101, help="samples per axis")

    p = sub.add_parser("mc", help="run the Monte Carlo experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker processes (default $SENSE_THREADS or 1)")
    p.add_argument("--methods", help="comma separated override of the configured methods")
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true",
                   help="record wall times (makes trials.csv run dependent)")

    p = sub.add_parser("crlb", help="print per-pair and fused Cramer-Rao bounds")
    p.add_argument("--config", required=True)

    p = sub.add_parser("overhead", help="print per-pair transmission payloads")
    p.add_argument("--config", required=True)
    return parser


def _load(args, overrides=None):
    exp = load_config(args.config)
    if overrides:
        from .config import parse_config
        data = exp.model_dump(mode="json")
        data.update(overrides)
        exp = parse_config(data)
    return exp


def _cmd_spectrum(args):
    from .montecarlo import emit_results, position_spectrum, summarize
    exp = _load(args, {"methods": [args.method]})
    grid = position_spectrum(exp, args.method, trial=args.trial, n_points=args.points)
    emit_results([], summarize([], exp), args.out, spectra={args.method: grid})
    peak = grid.argmax()
    print(f"{args.method}: spectrum peak at ({peak[0]:.4f}, {peak[1]:.4f}) -> {args.out}")


def _cmd_mc(args):
    from .montecarlo import emit_results, run_monte_carlo
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.methods:
        overrides["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    exp = _load(args, overrides)
    records, summary = run_monte_carlo(exp, threads=args.threads, timing=args.timing)
    emit_results(records, summary, args.out)
    for method, stats in summary["rmse"].items():
        if stats is None:
            print(f"{method:18s} all trials failed")
        else:
            print(f"{method:18s} rmse {stats['position_m']:.4f} m  {stats['velocity_mps']:.5f} m/s"
                  f"  median {stats['median_position_m']:.4f} m  failed {stats['failed']}")


def _cmd_crlb(args):
    from .montecarlo import summarize
    exp = _load(args)
    print(json.dumps(summarize([], exp)["crlb"], indent=2))


def _cmd_overhead(args):
    from .analysis import overhead_table
    exp = _load(args)
    print(json.dumps(overhead_table(exp.ofdm_config(), exp.prior_box(), exp.scene_obj()), indent=2))


COMMANDS = {"spectrum": _cmd_spectrum, "mc": _cmd_mc, "crlb": _cmd_crlb, "overhead": _cmd_overhead}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
