"""Per-epoch metrics rows and their CSV serialization.

Floats are written with six significant digits, so a file parses back to
exactly what a re-emit would produce; the round-trip is the format
contract.  Accuracies are percentages in [0, 100], spike rates are
probabilities in [0, 1], and epochs count contiguously from 1.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import DataError, UsageError

FLOAT_FIELDS = ("lr", "train_loss", "train_accuracy", "test_accuracy",
                "train_spike_rate", "test_spike_rate", "l2_term", "spike_term",
                "wall_seconds")


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    lr: float
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    train_spike_rate: float
    test_spike_rate: float
    l2_term: float
    spike_term: float
    wall_seconds: float


HEADER = ",".join(f.name for f in fields(MetricsRow))


def _validate(rows) -> None:
    if not rows:
        raise UsageError("no metrics rows to emit")
    for i, row in enumerate(rows):
        if row.epoch != i + 1:
            raise UsageError(
                f"epochs must be contiguous from 1, row {i} has epoch {row.epoch}")
        for name in ("train_accuracy", "test_accuracy"):
            v = getattr(row, name)
            if not 0.0 <= v <= 100.0:
                raise UsageError(f"{name}={v} outside [0, 100] at epoch {row.epoch}")
        for name in ("train_spike_rate", "test_spike_rate"):
            v = getattr(row, name)
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"{name}={v} outside [0, 1] at epoch {row.epoch}")


def format_row(row: MetricsRow) -> str:
    parts = [str(row.epoch)]
    parts += [f"{getattr(row, name):.6g}" for name in FLOAT_FIELDS]
    return ",".join(parts)


def emit_metrics_csv(rows, path) -> None:
    """Write header plus one line per row, newline-terminated."""
    rows = list(rows)
    _validate(rows)
    text = HEADER + "\n" + "\n".join(format_row(r) for r in rows) + "\n"
    Path(path).write_text(text)


def parse_metrics_csv(path) -> list[MetricsRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != HEADER:
        raise DataError(f"{path}: missing or wrong header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 1 + len(FLOAT_FIELDS):
            raise DataError(f"{path}:{lineno}: expected "
                            f"{1 + len(FLOAT_FIELDS)} fields, got {len(parts)}")
        try:
            rows.append(MetricsRow(int(parts[0]),
                                   *[float(p) for p in parts[1:]]))
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows
