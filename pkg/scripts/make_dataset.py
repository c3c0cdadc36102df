#!/usr/bin/env python3
"""Generate a synthetic dataset in the 3073-byte binary record format.

Writes data_batch_1.bin and test_batch.bin: oriented-grating images with
class-dependent color tints, balanced labels, deterministic for a given
seed.  Useful for smoke tests and the desk-scale reference task when the
real dataset is unavailable.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from spikegrad.data import make_synthetic_cifar


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", help="directory for the .bin files")
    parser.add_argument("--train", type=int, default=2000,
                        help="training record count (default 2000)")
    parser.add_argument("--test", type=int, default=1000,
                        help="test record count (default 1000)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--amplitude", type=float, default=0.30,
                        help="grating contrast; higher is easier")
    parser.add_argument("--noise", type=float, default=0.18,
                        help="pixel noise level; higher is harder")
    parser.add_argument("--jitter", type=float, default=0.4,
                        help="grating phase spread; higher is harder")
    parser.add_argument("--label-noise", type=float, default=0.0,
                        help="fraction of training labels flipped to a "
                             "different class (test split stays clean)")
    parser.add_argument("--distractors", type=int, default=0,
                        help="random solid-color squares stamped per image; "
                             "salient sample-specific overfitting bait")
    parser.add_argument("--overlap", type=float, default=0.0,
                        help="class ambiguity in [0, 1]: blurs orientation, "
                             "frequency, and tint across class boundaries")
    args = parser.parse_args()
    train_path, test_path = make_synthetic_cifar(
        args.out_dir, n_train=args.train, n_test=args.test, seed=args.seed,
        amplitude=args.amplitude, noise=args.noise, jitter=args.jitter,
        label_noise=args.label_noise, distractors=args.distractors,
        overlap=args.overlap)
    print(f"wrote {train_path} ({args.train} records)")
    print(f"wrote {test_path} ({args.test} records)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
