"""Single-file run checkpoints.

Layout, all integers little-endian:

    8 bytes   magic "SPKCKPT1"
    u32       config text length, then that many UTF-8 bytes
    u32       epoch
    u32       tensor count, then per tensor:
                u32 name length + UTF-8 name
                u32 ndim, u64 per dimension
                float64 little-endian raw values, C order

Arrays always serialize as float64 regardless of the training dtype, so a
checkpoint loads identically on any run configuration.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"SPKCKPT1"


def save_checkpoint(path, config_text: str, epoch: int, tensors: dict) -> None:
    parts = [MAGIC]
    blob = config_text.encode("utf-8")
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    parts.append(struct.pack("<I", epoch))
    parts.append(struct.pack("<I", len(tensors)))
    for name, values in tensors.items():
        arr = np.asarray(values, dtype="<f8", order="C")
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataError(
                f"{self.path}: truncated at byte {self.pos}, needed {n} more")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> tuple[str, int, dict]:
    """Return (config_text, epoch, {name: float64 array})."""
    raw = Path(path).read_bytes()
    r = _Reader(raw, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataError(f"{path}: bad magic, not a checkpoint file")
    config_text = r.take(r.u32()).decode("utf-8")
    epoch = r.u32()
    count = r.u32()
    tensors = {}
    for i in range(count):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        n = 1
        for d in shape:
            n *= d
        values = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).copy()
        if name in tensors:
            raise DataError(f"{path}: duplicate tensor name {name!r}")
        tensors[name] = values
    if r.pos != len(raw):
        raise DataError(f"{path}: {len(raw) - r.pos} trailing bytes")
    return config_text, epoch, tensors
