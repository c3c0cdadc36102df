"""Normalization: batch normalization and weight normalization.

Batch statistics are computed over the batch and spatial axes of a folded
(steps*batch, channels, h, w) activation, so all time steps of a sequence
share one set of statistics.  Variance is the biased (divide by count)
estimator everywhere, including the running buffers.

Weight normalization reparameterizes a kernel as w = g * v / ||v|| with one
magnitude g per output channel, the norm taken over all remaining axes.
It is composed from tape primitives, so the well-known property that the
gradient w.r.t. v is orthogonal to w falls out of backpropagation rather
than being hand-coded.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, DegeneracyError, UsageError


class BatchNorm:
    """Per-channel normalization of NCHW activations.

    ``mean_only=False`` is the standard affine transform
    gamma * (x - mu) / sqrt(var + eps) + beta.  ``mean_only=True`` keeps
    just the centering step, x - mu + beta, with no gamma and no variance;
    it is the variant paired with weight normalization so the weights keep
    control of the scale.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 mean_only: bool = False):
        if channels < 1:
            raise ConfigError(f"channels must be positive, got {channels}")
        self.channels = channels
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.mean_only = bool(mean_only)
        self.beta = T.zeros((channels,), requires_grad=True)
        self.gamma = None if mean_only else T.ones((channels,), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = None if mean_only else np.ones(channels, dtype=np.float64)

    def params(self):
        out = [("beta", self.beta, False)]
        if self.gamma is not None:
            out.insert(0, ("gamma", self.gamma, False))
        return out

    def state(self):
        buffers = {"running_mean": self.running_mean}
        if self.running_var is not None:
            buffers["running_var"] = self.running_var
        return buffers

    def _check(self, x: T.Tensor):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise UsageError(
                f"expected (n, {self.channels}, h, w) input, got {x.shape}")

    def forward(self, x: T.Tensor, training: bool) -> T.Tensor:
        self._check(x)
        cshape = (1, self.channels, 1, 1)
        if training:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            if count < 2:
                raise UsageError(
                    f"batch statistics need at least 2 samples per channel, got {count}")
            mu = T.reduce_mean(x, axis=(0, 2, 3), keepdims=True)
            centered = T.sub(x, mu)
            mu_d = mu.values.reshape(self.channels)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mu_d
            if self.mean_only:
                return T.add(centered, T.reshape(self.beta, cshape))
            var = T.reduce_mean(T.square(centered), axis=(0, 2, 3), keepdims=True)
            self.running_var = ((1 - m) * self.running_var
                                + m * var.values.reshape(self.channels))
            inv = T.powf(T.add(var, self.eps), -0.5)
            y = T.mul(centered, inv)
        else:
            mu = self.running_mean.reshape(cshape).astype(x.values.dtype)
            centered = T.sub(x, mu)
            if self.mean_only:
                return T.add(centered, T.reshape(self.beta, cshape))
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            y = T.mul(centered, inv.reshape(cshape).astype(x.values.dtype))
        out = T.mul(y, T.reshape(self.gamma, cshape))
        return T.add(out, T.reshape(self.beta, cshape))


def weight_normalize(v: T.Tensor, g: T.Tensor, axis: int = 0,
                     min_norm: float = 1e-12) -> T.Tensor:
    """Return w = g * v / ||v|| with one norm per slice along ``axis``."""
    if g.ndim != 1 or g.shape[0] != v.shape[axis]:
        raise UsageError(
            f"g must be 1-D with {v.shape[axis]} entries, got shape {g.shape}")
    reduce_axes = tuple(i for i in range(v.ndim) if i != axis)
    norm2 = T.reduce_sum(T.square(v), axis=reduce_axes, keepdims=True)
    smallest = float(np.sqrt(norm2.values.min()))
    if smallest < min_norm:
        raise DegeneracyError(
            f"direction vector norm {smallest:.3e} below {min_norm:.0e}; "
            "the reparameterization w = g*v/||v|| is undefined")
    inv = T.powf(norm2, -0.5)
    gshape = tuple(v.shape[i] if i == axis else 1 for i in range(v.ndim))
    return T.mul(T.mul(v, inv), T.reshape(g, gshape))


class WeightNormParam:
    """Direction v plus per-output-channel magnitude g for one weight.

    g starts at ||v|| per channel so the effective weight equals v at
    initialization; a data-dependent pass may overwrite it later.
    """

    def __init__(self, v_values: np.ndarray, axis: int = 0):
        self.axis = int(axis)
        self.v = T.Tensor(v_values, requires_grad=True)
        reduce_axes = tuple(i for i in range(self.v.ndim) if i != self.axis)
        norms = np.sqrt((self.v.values ** 2).sum(axis=reduce_axes))
        self.g = T.Tensor(norms, requires_grad=True)

    def weight(self) -> T.Tensor:
        return weight_normalize(self.v, self.g, self.axis)

    def params(self):
        return [("v", self.v, True), ("g", self.g, True)]
