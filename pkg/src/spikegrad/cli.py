"""Command-line entry points: train, sweep, eval.

The data directory resolves in precedence order: ``--data`` flag, then
the SPIKEGRAD_DATA environment variable, then the config file value.
Exit status is 0 on success and 1 with a one-line cause on any handled
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import load_config
from .errors import (ConfigError, DataError, DegeneracyError, TrainingDiverged,
                     UsageError)
from .harness import SWEEP_AXES, evaluate_checkpoint, run_experiment, run_sweep

DATA_ENV = "SPIKEGRAD_DATA"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikegrad",
        description="Train and evaluate spiking networks with surrogate gradients")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training configuration")
    train.add_argument("--config", required=True, help="experiment config file")
    train.add_argument("--seed", type=int, help="override the run seed")
    train.add_argument("--out", help="override the output directory")
    train.add_argument("--data", help="override the data directory")

    sweep = sub.add_parser("sweep", help="run one config across an axis of values")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True,
                       help="comma-separated axis values")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--out", help="override the sweep output directory")
    sweep.add_argument("--data", help="override the data directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--split", default="test", choices=("train", "test"))
    ev.add_argument("--data", help="override the data directory")
    return parser


def _resolve(cfg, args):
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "out", None):
        cfg = cfg.replace(output_dir=args.out)
    data = args.data or os.environ.get(DATA_ENV)
    if data:
        cfg = cfg.replace(data_dir=data)
    return cfg


def _parse_values(axis: str, text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if axis in ("weight_decay", "spike_penalty_weight"):
        return [float(p) for p in parts]
    return parts


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = _resolve(load_config(args.config), args)
            rows = run_experiment(cfg)
            last = rows[-1]
            print(f"done: {cfg.epochs} epochs, final train accuracy "
                  f"{last.train_accuracy:.2f}%, test accuracy "
                  f"{last.test_accuracy:.2f}%, test spike rate "
                  f"{last.test_spike_rate:.4f}")
            print(f"artifacts in {cfg.output_dir}")
        elif args.command == "sweep":
            cfg = _resolve(load_config(args.config), args)
            values = _parse_values(args.axis, args.values)
            summary = run_sweep(cfg, args.axis, values)
            for row in summary:
                print(f"{args.axis}={row['value']}: final test accuracy "
                      f"{row['final_test_accuracy']:.2f}%, final test spike rate "
                      f"{row['final_test_spike_rate']:.4f}")
            print(f"summary in {cfg.output_dir}/summary.csv")
        else:
            data = args.data or os.environ.get(DATA_ENV)
            acc, rate = evaluate_checkpoint(args.checkpoint, args.split, data)
            print(f"{args.split} accuracy {acc:.2f}%, spike rate {rate:.4f}")
        return 0
    except (ConfigError, DataError, UsageError, DegeneracyError,
            TrainingDiverged, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
