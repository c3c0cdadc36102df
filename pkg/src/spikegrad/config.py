"""Experiment configuration: a flat sectioned key-value file.

Five sections — architecture, optimizer, regularizer, schedule, run —
with every key optional (defaults below) and unknown sections or keys
rejected outright.  ``to_text`` renders the full resolved configuration
back out in canonical order; the render embeds in checkpoints and run
metadata so artifacts are self-describing.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .models import NetworkConfig
from .objectives import RegularizerConfig
from .optim import ScheduleConfig


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (attribute, converter)
_SCHEMA = {
    "architecture": {
        "arch": ("arch", str),
        "channels": ("channels", int),
        "norm": ("norm", str),
        "num_classes": ("num_classes", int),
        "theta": ("theta", float),
        "alpha": ("alpha", float),
        "mode": ("mode", str),
        "depth": ("depth", int),
        "patch_size": ("patch_size", int),
        "kernel_size": ("kernel_size", int),
    },
    "optimizer": {
        "kind": ("optimizer", str),
        "lr": ("lr", float),
        "momentum": ("momentum", float),
        "beta1": ("beta1", float),
        "beta2": ("beta2", float),
        "eps": ("eps", float),
        "weight_decay": ("weight_decay", float),
        "decay_mode": ("decay_mode", str),
    },
    "regularizer": {
        "spike_penalty_weight": ("spike_penalty_weight", float),
        "spike_penalty_order": ("spike_penalty_order", str),
    },
    "schedule": {
        "kind": ("schedule_kind", str),
        "lr_min": ("lr_min", float),
    },
    "run": {
        "epochs": ("epochs", int),
        "batch_size": ("batch_size", int),
        "time_steps": ("time_steps", int),
        "seed": ("seed", int),
        "train_subset_size": ("train_subset_size", int),
        "test_subset_size": ("test_subset_size", int),
        "data_dir": ("data_dir", str),
        "output_dir": ("output_dir", str),
        "augment": ("augment", _bool),
        "record_timing": ("record_timing", _bool),
        "dtype": ("dtype", str),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    # architecture
    arch: str = "cnn"
    channels: int = 16
    norm: str = "batch"
    num_classes: int = 10
    theta: float = 1.0
    alpha: float = 2.0
    mode: str = "spike"
    depth: int = 8
    patch_size: int = 1
    kernel_size: int = 9
    # optimizer
    optimizer: str = "sgd"
    lr: float = 0.1
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay_mode: str = "auto"
    # regularizer
    spike_penalty_weight: float = 0.0
    spike_penalty_order: str = "square"
    # schedule
    schedule_kind: str = "cosine"
    lr_min: float = 0.0
    # run
    epochs: int = 20
    batch_size: int = 64
    time_steps: int = 4
    seed: int = 0
    train_subset_size: int = 2000
    test_subset_size: int = 1000
    data_dir: str = "data"
    output_dir: str = "runs"
    augment: bool = True
    record_timing: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adamw"):
            raise ConfigError(
                f"optimizer kind must be 'sgd' or 'adamw', got {self.optimizer!r}")
        if self.decay_mode not in ("auto",) and self.decay_mode not in (
                "none", "loss-term", "optimizer-coupled", "optimizer-decoupled"):
            raise ConfigError(f"unknown decay_mode {self.decay_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.time_steps < 1:
            raise ConfigError("epochs, batch_size, time_steps must be >= 1")
        if self.train_subset_size < 1 or self.test_subset_size < 1:
            raise ConfigError("subset sizes must be >= 1")
        # constructing the derived configs validates their fields
        self.network()
        self.regularizer()
        self.schedule()

    def resolved_decay_mode(self) -> str:
        if self.decay_mode != "auto":
            return self.decay_mode
        if self.weight_decay == 0:
            return "none"
        return ("optimizer-coupled" if self.optimizer == "sgd"
                else "optimizer-decoupled")

    def network(self) -> NetworkConfig:
        return NetworkConfig(
            arch=self.arch, channels=self.channels, n_steps=self.time_steps,
            norm=self.norm, num_classes=self.num_classes, theta=self.theta,
            alpha=self.alpha, mode=self.mode, depth=self.depth,
            patch_size=self.patch_size, kernel_size=self.kernel_size)

    def regularizer(self) -> RegularizerConfig:
        return RegularizerConfig(
            weight_decay_mode=self.resolved_decay_mode(),
            weight_decay=self.weight_decay,
            spike_penalty_weight=self.spike_penalty_weight,
            spike_penalty_order=self.spike_penalty_order)

    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(kind=self.schedule_kind, lr_max=self.lr,
                              lr_min=self.lr_min, t_max=self.epochs)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        by_attr = {}
        for field in dataclasses.fields(self):
            by_attr[field.name] = getattr(self, field.name)
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (attr, conv) in keys.items():
                value = by_attr[attr]
                if isinstance(value, bool):
                    value = "true" if value else "false"
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}]; expected one of "
                f"{sorted(_SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]; expected one "
                    f"of {sorted(_SCHEMA[section])}")
            attr, conv = _SCHEMA[section][key]
            try:
                values[attr] = conv(raw)
            except ValueError as e:
                raise ConfigError(
                    f"bad value for [{section}] {key}: {raw!r} ({e})") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())
