"""Task loss, weight decay as a loss term, and spike penalization.

The spike penalty for one layer's train S (folded steps*batch by neuron
axes) is sum(S^p) / (2 * size), p = 2 for the square variant and p = 1 for
the first-order variant; layer penalties are averaged, not summed, so the
penalty weight means the same thing at any depth.  On binary trains both
variants have the same value, but the square variant contributes zero
gradient at silent neurons while the first-order variant pushes every
neuron down uniformly.

Weight decay as a loss term is the raw sum of squared weights (no 1/2),
so adding it with coefficient lambda contributes gradient 2*lambda*w;
optimizer-coupled decay with coefficient 2*lambda follows the identical
trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, UsageError

DECAY_MODES = ("none", "loss-term", "optimizer-coupled", "optimizer-decoupled")
PENALTY_ORDERS = ("square", "first")


@dataclass(frozen=True)
class RegularizerConfig:
    weight_decay_mode: str = "none"
    weight_decay: float = 0.0
    spike_penalty_weight: float = 0.0
    spike_penalty_order: str = "square"

    def __post_init__(self):
        if self.weight_decay_mode not in DECAY_MODES:
            raise ConfigError(
                f"weight_decay_mode must be one of {DECAY_MODES}, "
                f"got {self.weight_decay_mode!r}")
        if self.spike_penalty_order not in PENALTY_ORDERS:
            raise ConfigError(
                f"spike_penalty_order must be one of {PENALTY_ORDERS}, "
                f"got {self.spike_penalty_order!r}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.spike_penalty_weight < 0:
            raise ConfigError(
                f"spike_penalty_weight must be >= 0, got {self.spike_penalty_weight}")

    @property
    def optimizer_decay(self) -> float:
        """Decay coefficient the optimizer should apply."""
        if self.weight_decay_mode in ("optimizer-coupled", "optimizer-decoupled"):
            return self.weight_decay
        return 0.0

    @property
    def loss_decay(self) -> float:
        """Decay coefficient applied inside the loss."""
        return self.weight_decay if self.weight_decay_mode == "loss-term" else 0.0


@dataclass
class LossReport:
    """Scalar summary of one minibatch objective, raw terms unweighted."""
    task_loss: float
    l2_term: float
    spike_term: float
    total: float
    spike_rate: float


def cross_entropy_time_mean(logits: T.Tensor, labels: np.ndarray,
                            n_steps: int | None = None) -> T.Tensor:
    """Cross-entropy of logits averaged over time.

    Accepts (steps, batch, classes) directly or a folded
    (steps*batch, classes) tensor together with ``n_steps``.
    """
    if logits.ndim == 2:
        if n_steps is None:
            raise UsageError("folded logits need n_steps")
        if logits.shape[0] % n_steps:
            raise UsageError(
                f"folded axis {logits.shape[0]} not divisible by n_steps={n_steps}")
        batch = logits.shape[0] // n_steps
        logits = T.reshape(logits, (n_steps, batch, logits.shape[1]))
    elif logits.ndim != 3:
        raise UsageError(f"logits must be 2-D folded or 3-D, got {logits.shape}")
    mean_logits = T.reduce_mean(logits, axis=0)
    return T.cross_entropy_logits(mean_logits, labels)


def l2_penalty(params) -> T.Tensor:
    """Sum of squared entries over decay-class parameters.

    ``params`` is an iterable of (name, tensor, decay) triples; only
    entries flagged for decay contribute (weights and weight-norm v/g;
    biases and norm-affine parameters are excluded upstream).
    """
    total = None
    for _, t, decay in params:
        if not decay:
            continue
        term = T.reduce_sum(T.square(t))
        total = term if total is None else T.add(total, term)
    if total is None:
        return T.zeros(())
    return total


def spike_penalty(trains, order: str = "square") -> T.Tensor:
    """Mean over layers of sum(S^order) / (2 * entries-per-layer)."""
    trains = list(trains)
    if not trains:
        raise UsageError("spike_penalty needs at least one spike train")
    if order not in PENALTY_ORDERS:
        raise ConfigError(f"order must be one of {PENALTY_ORDERS}, got {order!r}")
    k = len(trains)
    total = None
    for s in trains:
        inner = T.square(s) if order == "square" else s
        term = T.scale(T.reduce_sum(inner), 1.0 / (2.0 * s.size * k))
        total = term if total is None else T.add(total, term)
    return total


def spike_rate(trains) -> float:
    """Mean spike value over all layers, neurons, steps, and samples."""
    trains = list(trains)
    if not trains:
        raise UsageError("spike_rate needs at least one spike train")
    return float(np.mean([float(s.values.mean()) for s in trains]))


def compose_loss(task: T.Tensor, params, trains,
                 cfg: RegularizerConfig) -> tuple[T.Tensor, LossReport]:
    """Assemble total = task + loss_decay * l2 + penalty_weight * spikes.

    Raw l2 and spike terms are always measured for reporting; they only
    join the differentiated total when their coefficient is nonzero, so a
    plain run adds no tape overhead.
    """
    params = list(params)
    trains = list(trains)
    total = task
    l2 = l2_penalty(params)
    if cfg.loss_decay > 0:
        total = T.add(total, T.scale(l2, cfg.loss_decay))
    if trains:
        pen = spike_penalty(trains, cfg.spike_penalty_order)
        if cfg.spike_penalty_weight > 0:
            total = T.add(total, T.scale(pen, cfg.spike_penalty_weight))
        spike_term = pen.item()
        rate = spike_rate(trains)
    else:
        spike_term = 0.0
        rate = 0.0
    report = LossReport(task_loss=task.item(), l2_term=l2.item(),
                        spike_term=spike_term, total=total.item(),
                        spike_rate=rate)
    return total, report
