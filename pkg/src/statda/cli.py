"""Command-line entry point: ``statda {truth,run,calibrate,sweep,metrics}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import METHODS, ExperimentConfig
from .errors import StatDAError

# flag name -> config field
_FLAGS = {
    "regime": "regime", "n_samples": "N", "dt": "dt", "dt_obs": "dt_obs", "t_final": "T",
    "seed": "seed", "epsilon_inv": "epsilon_inv", "method": "method", "stabilized": "stabilized",
    "mc_size": "mc_size", "out": "output_dir",
}


def _common(p):
    p.add_argument("--config", type=Path, help="JSON experiment config; flags override it")
    p.add_argument("--regime", type=int, choices=(1, 2, 3))
    p.add_argument("--n-samples", type=int, help="ensemble size N")
    p.add_argument("--dt", type=float)
    p.add_argument("--dt-obs", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon-inv", type=float)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--stabilized", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--mc-size", type=int)
    p.add_argument("--out", type=str, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="statda", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("truth", "Monte-Carlo truth statistics"),
                        ("run", "observations, one filter run and its metrics"),
                        ("calibrate", "estimate observation noise amplitudes")):
        _common(sub.add_parser(name, help=help_))
    sw = sub.add_parser("sweep", help="metrics over a list of N or dt_obs values")
    _common(sw)
    sw.add_argument("--axis", choices=("N", "dt_obs"), required=True)
    sw.add_argument("--values", required=True, help="comma-separated list")
    sw.add_argument("--reps", type=int, default=1)
    sw.add_argument("--workers", type=int, default=1)
    me = sub.add_parser("metrics", help="recompute metrics.json from an output directory")
    me.add_argument("--out", type=str, required=True)
    me.add_argument("--method", choices=METHODS)
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(args.config.read_text())
    overrides = {field: getattr(args, flag) for flag, field in _FLAGS.items()
                 if getattr(args, flag, None) is not None}
    return cfg.with_(**overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "metrics":
            print(pipeline.cmd_metrics(args.out, args.method).to_json())
            return 0
        cfg = config_from_args(args)
        if args.command == "truth":
            pipeline.cmd_truth(cfg)
        elif args.command == "calibrate":
            print(pipeline.cmd_calibrate(cfg).to_json())
        elif args.command == "run":
            result, err = pipeline.cmd_run(cfg)
            if err is not None:
                print(f"diverged: {err}", file=sys.stderr)
                return 3
            print(result.to_json())
        elif args.command == "sweep":
            rows = pipeline.cmd_sweep(cfg, args.axis, args.values.split(","), reps=args.reps,
                                      workers=args.workers)
            for row in rows:
                print(",".join(pipeline._fmt(x) for x in row))
    except StatDAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
