"""CIFAR-10 binary ingestion, input encoding, and augmentation.

File layout (one record): a label byte in [0, 9] followed by 3072 pixel
bytes as three 1024-byte row-major planes, red then green then blue.
Loading is bit-exact; validation failures name the offending byte counts
or record index.

Pixels are standardized per channel with the conventional CIFAR-10
statistics below.  Input over time uses constant-current coding: the
standardized image is presented identically at every step.

``make_synthetic_cifar`` writes files in the exact binary layout with a
deterministic class-structured generator (oriented gratings with
class-specific color tints, plus per-sample jitter and pixel noise), as a
stand-in when the real dataset is unavailable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

RECORD_BYTES = 3073
IMAGE_BYTES = 3072
CIFAR_MEANS = (0.4914, 0.4822, 0.4465)
CIFAR_STDS = (0.2470, 0.2435, 0.2616)
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"


@dataclass(frozen=True)
class DatasetRecord:
    label: int
    pixels: np.ndarray  # uint8, (3, 32, 32)

    def normalized(self) -> np.ndarray:
        return normalize_images(self.pixels[None])[0]


def load_cifar10_binary(path) -> list[DatasetRecord]:
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % RECORD_BYTES:
        raise DataError(
            f"{path}: length {len(raw)} bytes is not a positive multiple of "
            f"{RECORD_BYTES}")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = data[:, 0]
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise DataError(
            f"{path}: record {int(bad[0])} has label {int(labels[bad[0]])}, "
            "expected 0..9")
    images = data[:, 1:].reshape(-1, 3, 32, 32)
    return [DatasetRecord(int(l), img) for l, img in zip(labels, images)]


def records_to_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    labels = np.array([r.label for r in records], dtype=np.int64)
    pixels = np.stack([r.pixels for r in records])
    return labels, pixels


def normalize_images(pixels: np.ndarray) -> np.ndarray:
    """uint8 (n, 3, 32, 32) -> per-channel standardized float64."""
    x = pixels.astype(np.float64) / 255.0
    means = np.asarray(CIFAR_MEANS).reshape(1, 3, 1, 1)
    stds = np.asarray(CIFAR_STDS).reshape(1, 3, 1, 1)
    return (x - means) / stds


def encode_constant_current(image: np.ndarray, n_steps: int) -> np.ndarray:
    """Repeat one image (or a batch) identically at each of n_steps."""
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    return np.repeat(image[None], n_steps, axis=0)


def augment_batch(pixels: np.ndarray, rng: np.random.Generator,
                  pad: int = 4) -> np.ndarray:
    """Random crop from zero padding plus random horizontal flip, per image."""
    n, c, h, w = pixels.shape
    padded = np.pad(pixels, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    tops = rng.integers(0, 2 * pad + 1, size=n)
    lefts = rng.integers(0, 2 * pad + 1, size=n)
    flips = rng.integers(0, 2, size=n).astype(bool)
    out = np.empty_like(pixels)
    for i in range(n):
        crop = padded[i, :, tops[i]:tops[i] + h, lefts[i]:lefts[i] + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out


def load_split(data_dir, split: str, subset_size: int | None = None
               ) -> tuple[np.ndarray, np.ndarray]:
    """Load 'train' or 'test' records from the standard split files.

    Train records come from whichever data_batch_*.bin files exist, in
    order; the subset is the leading ``subset_size`` records.  Test
    records come from test_batch.bin only, so subsets of the two splits
    are disjoint by construction.
    """
    data_dir = Path(data_dir)
    if split == "train":
        files = [data_dir / name for name in TRAIN_FILES if (data_dir / name).exists()]
        if not files:
            raise DataError(f"no {TRAIN_FILES[0]}-style files in {data_dir}")
    elif split == "test":
        files = [data_dir / TEST_FILE]
        if not files[0].exists():
            raise DataError(f"missing {TEST_FILE} in {data_dir}")
    else:
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    records = []
    for f in files:
        records.extend(load_cifar10_binary(f))
        if subset_size is not None and len(records) >= subset_size:
            break
    if subset_size is not None:
        if len(records) < subset_size:
            raise DataError(
                f"{split} split has {len(records)} records, need {subset_size}")
        records = records[:subset_size]
    return records_to_arrays(records)


def _synthetic_images(labels: np.ndarray, rng: np.random.Generator,
                      amplitude: float = 0.30, noise: float = 0.18,
                      jitter: float = 0.4, distractors: int = 0,
                      overlap: float = 0.0) -> np.ndarray:
    """Class-structured 32x32 RGB images: oriented color gratings with
    per-sample phase/orientation jitter, brightness shifts, pixel noise.

    ``distractors`` stamps that many solid random-color squares on each
    image: salient sample-specific features, uncorrelated with the label,
    that overfitting can latch onto and regularization suppresses.

    ``overlap`` in [0, 1] blurs the class structure itself: it widens the
    per-sample orientation and frequency spread toward the inter-class
    gaps and mixes each sample's tint toward a random color, so classes
    genuinely overlap and a model can fit the training draw better than
    any rule generalizes."""
    n = labels.size
    grid = (np.arange(32) - 15.5) / 16.0
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    out = np.empty((n, 3, 32, 32))
    for i in range(n):
        c = int(labels[i])
        theta = np.pi * c / 10.0 + rng.normal(0, 0.06 + 0.45 * overlap)
        freq = 2.0 + (c % 3) + rng.normal(0, 0.1 + 0.8 * overlap)
        phase = rng.normal(0, jitter)
        wave = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta))
                      + phase)
        tint = 0.5 + 0.5 * np.sin(2 * np.pi * c / 10.0
                                  + np.array([0.0, 2.0, 4.0]) * np.pi / 3.0)
        if overlap > 0.0:
            mix = overlap * rng.uniform()
            tint = (1.0 - mix) * tint + mix * rng.uniform(0.0, 1.0, size=3)
        amp = amplitude * rng.uniform(0.8, 1.2)
        brightness = rng.uniform(-0.08, 0.08)
        img = 0.5 + brightness + amp * tint[:, None, None] * wave[None]
        for _ in range(distractors):
            side = int(rng.integers(6, 10))
            top = int(rng.integers(0, 33 - side))
            left = int(rng.integers(0, 33 - side))
            img[:, top:top + side, left:left + side] = \
                rng.uniform(0.0, 1.0, size=3)[:, None, None]
        img += rng.normal(0, noise, size=(3, 32, 32))
        out[i] = img
    return np.clip(out, 0.0, 1.0)


def _write_records(path: Path, labels: np.ndarray, images01: np.ndarray) -> None:
    pixels = np.round(images01 * 255.0).astype(np.uint8)
    rows = np.concatenate(
        [labels.astype(np.uint8)[:, None], pixels.reshape(len(labels), IMAGE_BYTES)],
        axis=1)
    path.write_bytes(rows.tobytes())


def make_synthetic_cifar(out_dir, n_train: int = 2000, n_test: int = 1000,
                         seed: int = 0, amplitude: float = 0.30,
                         noise: float = 0.18, jitter: float = 0.4,
                         label_noise: float = 0.0, distractors: int = 0,
                         overlap: float = 0.0) -> tuple[Path, Path]:
    """Write data_batch_1.bin and test_batch.bin with synthetic records.

    Labels cycle 0..9 so every class count is balanced to within one.
    Deterministic for a given parameter set.  ``label_noise`` flips that
    fraction of training labels (uniformly to a different class) while
    the test split stays clean; images draw from their own stream, so
    the pixel bytes are identical whatever the flip fraction.  For
    generalization studies, ``overlap`` makes classes genuinely
    ambiguous and ``distractors`` plants salient sample-specific
    features, so a small network trained on few samples fits the
    training draw better than the task generalizes.
    """
    if not 0.0 <= label_noise < 1.0:
        raise ConfigError(f"label_noise must be in [0, 1), got {label_noise}")
    if distractors < 0:
        raise ConfigError(f"distractors must be >= 0, got {distractors}")
    if not 0.0 <= overlap <= 1.0:
        raise ConfigError(f"overlap must be in [0, 1], got {overlap}")
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    train_labels = np.arange(n_train) % 10
    test_labels = np.arange(n_test) % 10
    train_images = _synthetic_images(
        train_labels, rng, amplitude, noise, jitter, distractors, overlap)
    test_images = _synthetic_images(
        test_labels, rng, amplitude, noise, jitter, distractors, overlap)
    if label_noise > 0.0:
        flip_rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
        flip = flip_rng.random(n_train) < label_noise
        offsets = flip_rng.integers(1, 10, size=n_train)
        train_labels = np.where(flip, (train_labels + offsets) % 10, train_labels)
    train_path = out_dir / TRAIN_FILES[0]
    test_path = out_dir / TEST_FILE
    _write_records(train_path, train_labels, train_images)
    _write_records(test_path, test_labels, test_images)
    return train_path, test_path
