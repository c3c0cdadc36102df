"""Integrate-and-fire dynamics and the arctangent surrogate gradient.

The spiking nonlinearity is a Heaviside step on the membrane potential.
Its derivative is zero almost everywhere, so the backward pass substitutes
a smooth surrogate:

    g(x) = alpha / (2 * (1 + (pi * alpha * x / 2)^2))

evaluated at V - theta.  The surrogate is the exact derivative of

    f(x) = arctan(pi * alpha * x / 2) / pi + 1/2

which is exposed as the "relaxed" activation: replacing the step by f turns
the network into an ordinary smooth net whose gradients can be validated
with finite differences end to end.

Neurons use a hard reset: after a spike the membrane returns to zero.  In
spiking mode the reset factor (1 - S) is treated as a constant during
backpropagation, so gradient flows through the surrogate path only; in
relaxed mode the reset stays differentiable so the finite-difference
identity holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, UsageError

MODES = ("spike", "relaxed")


def atan_surrogate(x: np.ndarray, alpha: float = 2.0) -> np.ndarray:
    """Surrogate derivative; peaks at alpha/2 for x = 0."""
    z = (np.pi * alpha / 2.0) * x
    return alpha / (2.0 * (1.0 + z * z))


def atan_primitive(x: np.ndarray, alpha: float = 2.0) -> np.ndarray:
    """Smooth step whose derivative is ``atan_surrogate``; range (0, 1)."""
    return np.arctan((np.pi * alpha / 2.0) * x) / np.pi + 0.5


def heaviside_spike(v: T.Tensor, theta: float = 1.0, alpha: float = 2.0) -> T.Tensor:
    """Binary spikes S = 1[V >= theta] with surrogate backward at V - theta."""
    s_values = (v.values >= theta).astype(v.values.dtype)
    return T.unary_from_rule(
        v, s_values, lambda xv: atan_surrogate(xv - theta, alpha), "spike")


def relaxed_spike(v: T.Tensor, theta: float = 1.0, alpha: float = 2.0) -> T.Tensor:
    """Smooth stand-in for ``heaviside_spike`` with the same backward rule."""
    s_values = atan_primitive(v.values - theta, alpha)
    return T.unary_from_rule(
        v, s_values, lambda xv: atan_surrogate(xv - theta, alpha), "relaxed_spike")


@dataclass(frozen=True)
class NeuronConfig:
    """Integrate-and-fire parameters shared by every spiking layer."""
    theta: float = 1.0
    alpha: float = 2.0
    mode: str = "spike"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"neuron mode must be one of {MODES}, got {self.mode!r}")
        if self.theta <= 0:
            raise ConfigError(f"threshold must be positive, got {self.theta}")
        if self.alpha <= 0:
            raise ConfigError(f"surrogate alpha must be positive, got {self.alpha}")


def if_step(v: T.Tensor, current: T.Tensor, cfg: NeuronConfig) -> tuple[T.Tensor, T.Tensor]:
    """One integrate-and-fire update.

    Returns ``(spikes, v_next)`` where ``v_next = (v + current) * (1 - spikes)``.
    """
    if v.shape != current.shape:
        raise UsageError(f"membrane shape {v.shape} != input shape {current.shape}")
    v_new = T.add(v, current)
    if cfg.mode == "spike":
        s = heaviside_spike(v_new, cfg.theta, cfg.alpha)
        keep = T.add(T.scale(s.detach(), -1.0), 1.0)
    else:
        s = relaxed_spike(v_new, cfg.theta, cfg.alpha)
        keep = T.add(T.scale(s, -1.0), 1.0)
    v_next = T.mul(v_new, keep)
    return s, v_next


def unroll_if(folded: T.Tensor, n_steps: int, cfg: NeuronConfig) -> T.Tensor:
    """Run an IF neuron over a folded (n_steps*batch, ...) activation.

    The membrane starts at zero, is carried across the ``n_steps`` slices,
    and is discarded afterwards.  Output spikes come back in the same
    folded layout as the input.
    """
    if n_steps < 1:
        raise UsageError(f"n_steps must be >= 1, got {n_steps}")
    if folded.shape[0] % n_steps:
        raise UsageError(
            f"folded axis {folded.shape[0]} not divisible by n_steps={n_steps}")
    batch = folded.shape[0] // n_steps
    v = T.zeros((batch,) + folded.shape[1:])
    spikes = []
    for t in range(n_steps):
        current = T.slice0(folded, t * batch, (t + 1) * batch)
        s, v = if_step(v, current, cfg)
        spikes.append(s)
    return spikes[0] if n_steps == 1 else T.concat(spikes, axis=0)
