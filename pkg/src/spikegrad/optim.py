"""Optimizers and the cosine learning-rate schedule.

SGD applies coupled weight decay: the decay term joins the raw gradient
before the momentum update.  AdamW applies decoupled decay: the decay is
subtracted from the weight directly, outside the adaptive rescaling.
Decay touches only parameters flagged as decay-class (weights and both
weight-normalization parameters), never biases or normalization affine
parameters, matching how the decay coefficient is interpreted everywhere
else in the framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "cosine"
    lr_max: float = 0.1
    lr_min: float = 0.0
    t_max: int = 1

    def __post_init__(self):
        if self.kind != "cosine":
            raise ConfigError(f"schedule kind must be 'cosine', got {self.kind!r}")
        if self.t_max < 1:
            raise ConfigError(f"t_max must be >= 1, got {self.t_max}")
        if self.lr_min > self.lr_max:
            raise ConfigError(
                f"lr_min {self.lr_min} must not exceed lr_max {self.lr_max}")


def cosine_lr(sch: ScheduleConfig, t: int) -> float:
    """Annealed rate at epoch index t; t=0 gives lr_max, t=t_max gives lr_min."""
    if not 0 <= t <= sch.t_max:
        raise UsageError(f"epoch index {t} outside [0, {sch.t_max}]")
    return sch.lr_min + 0.5 * (sch.lr_max - sch.lr_min) * (
        1.0 + np.cos(np.pi * t / sch.t_max))


class Optimizer:
    """Shared bookkeeping: named parameters, decay flags, gradient checks."""

    def __init__(self, params, lr: float, weight_decay: float = 0.0):
        if lr < 0 or weight_decay < 0:
            raise ConfigError("lr and weight_decay must be nonnegative")
        self.entries = [(name, t, bool(decay)) for name, t, decay in params]
        if not self.entries:
            raise ConfigError("optimizer needs at least one parameter")
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)

    def _grads(self):
        for name, t, decay in self.entries:
            if t.grad is None:
                raise UsageError(f"parameter {name!r} has no gradient")
            yield name, t, decay, t.grad

    def zero_grad(self):
        for _, t, _ in self.entries:
            t.grad = None

    def step(self):
        raise NotImplementedError

    def state(self) -> dict:
        raise NotImplementedError

    def load_state(self, state: dict) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    """Momentum SGD with coupled decay: g <- grad + wd*w, applied pre-momentum."""

    def __init__(self, params, lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        if not 0 <= momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = float(momentum)
        self.buffers = {name: np.zeros_like(t.values) for name, t, _ in self.entries}

    def step(self):
        for name, t, decay, grad in self._grads():
            g = grad + self.weight_decay * t.values if (decay and self.weight_decay) else grad
            buf = self.buffers[name]
            buf *= self.momentum
            buf += g
            t.values -= self.lr * buf

    def state(self):
        return {"step_count": np.array([0.0]),
                **{f"buf.{name}": buf.copy() for name, buf in self.buffers.items()}}

    def load_state(self, state):
        for name in self.buffers:
            self.buffers[name][:] = state[f"buf.{name}"]


class AdamW(Optimizer):
    """Adam moments with bias correction plus decoupled weight decay."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        b1, b2 = betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError(f"betas must be in [0, 1), got {betas}")
        self.beta1, self.beta2 = float(b1), float(b2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(t.values) for name, t, _ in self.entries}
        self.v = {name: np.zeros_like(t.values) for name, t, _ in self.entries}

    def step(self):
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for name, t, decay, grad in self._grads():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / c1
            v_hat = v / c2
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if decay and self.weight_decay:
                update = update + self.lr * self.weight_decay * t.values
            t.values -= update

    def state(self):
        out = {"step_count": np.array([float(self.step_count)])}
        for name in self.m:
            out[f"m.{name}"] = self.m[name].copy()
            out[f"v.{name}"] = self.v[name].copy()
        return out

    def load_state(self, state):
        self.step_count = int(state["step_count"][0])
        for name in self.m:
            self.m[name][:] = state[f"m.{name}"]
            self.v[name][:] = state[f"v.{name}"]


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9,
                   betas=(0.9, 0.999), eps: float = 1e-8,
                   weight_decay: float = 0.0) -> Optimizer:
    if kind == "sgd":
        return SGD(params, lr, momentum=momentum, weight_decay=weight_decay)
    if kind == "adamw":
        return AdamW(params, lr, betas=betas, eps=eps, weight_decay=weight_decay)
    raise ConfigError(f"optimizer kind must be 'sgd' or 'adamw', got {kind!r}")
