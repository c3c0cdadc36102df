"""Spiking architectures assembled from the layer library.

Three families are provided, each in three normalization modes:

* ``cnn``: four conv-norm-IF-maxpool stages followed by a linear readout.
* ``sew``: a conv-norm-IF stem, then five stages of two spike-element-wise
  residual blocks plus a 2x2 max pool, then a linear readout.  Each
  residual body is two conv-norm-IF units, giving 21 convolutions total.
* ``convmixer``: a patch-embedding conv-norm-IF, then ``depth`` repeats of
  a depthwise residual unit followed by a pointwise unit, global average
  pooling over space and time, and a linear readout broadcast back to
  every step.

Normalization modes: ``batch`` uses batch normalization after bias-free
convolutions; ``weight`` uses weight-normalized convolutions with biases
and no normalization layer; ``weight-mean`` uses weight-normalized
bias-free convolutions followed by mean-only batch normalization.

Networks consume folded inputs of shape (steps*batch, c, h, w) and return
folded per-step logits of shape (steps*batch, classes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DegeneracyError, UsageError
from .layers import (Conv2d, ExpandTime, Flatten, IFLayer, Linear, MaxPool,
                     NormLayer, Sequential, SEWBlock, SpatialMean, TimeMean,
                     walk)
from .neuron import MODES, NeuronConfig

ARCHS = ("cnn", "sew", "convmixer")
NORMS = ("batch", "weight", "weight-mean")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters; every field has a desk-scale default."""
    arch: str = "cnn"
    channels: int = 16
    n_steps: int = 4
    norm: str = "batch"
    num_classes: int = 10
    in_channels: int = 3
    image_size: int = 32
    theta: float = 1.0
    alpha: float = 2.0
    mode: str = "spike"
    depth: int = 8
    patch_size: int = 1
    kernel_size: int = 9

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.channels < 1 or self.n_steps < 1 or self.num_classes < 2:
            raise ConfigError("channels, n_steps must be >= 1 and num_classes >= 2")
        if self.arch == "cnn" and self.image_size % 16:
            raise ConfigError(
                f"cnn needs image_size divisible by 16, got {self.image_size}")
        if self.arch == "sew" and self.image_size % 32:
            raise ConfigError(
                f"sew needs image_size divisible by 32, got {self.image_size}")
        if self.arch == "convmixer":
            if self.image_size % self.patch_size:
                raise ConfigError(
                    f"patch_size {self.patch_size} must divide image_size {self.image_size}")
            if self.kernel_size % 2 == 0:
                raise ConfigError(
                    f"depthwise kernel_size must be odd, got {self.kernel_size}")
            if self.depth < 1:
                raise ConfigError(f"depth must be >= 1, got {self.depth}")

    def neuron(self) -> NeuronConfig:
        return NeuronConfig(theta=self.theta, alpha=self.alpha, mode=self.mode)


def _conv_unit(cfg: NetworkConfig, rng, c_in: int, c_out: int, k: int = 3,
               stride: int = 1, padding: int = 1, groups: int = 1) -> list:
    """conv -> (norm) -> IF in the configured normalization mode."""
    wn = cfg.norm != "batch"
    bias = cfg.norm == "weight"
    unit = [Conv2d(c_in, c_out, k, stride=stride, padding=padding, groups=groups,
                   bias=bias, weight_norm=wn, rng=rng)]
    if cfg.norm == "batch":
        unit.append(NormLayer(c_out))
    elif cfg.norm == "weight-mean":
        unit.append(NormLayer(c_out, mean_only=True))
    unit.append(IFLayer(cfg.neuron()))
    return unit


def build_cnn(cfg: NetworkConfig, rng) -> Sequential:
    layers = []
    c_in = cfg.in_channels
    for stage in range(4):
        layers += _conv_unit(cfg, rng, c_in, cfg.channels)
        layers.append(MaxPool(2, 2))
        c_in = cfg.channels
    side = cfg.image_size // 16
    layers.append(Flatten())
    layers.append(Linear(cfg.channels * side * side, cfg.num_classes, rng=rng))
    return Sequential(layers)


def build_sew(cfg: NetworkConfig, rng) -> Sequential:
    layers = _conv_unit(cfg, rng, cfg.in_channels, cfg.channels)
    for stage in range(5):
        for block in range(2):
            body = (_conv_unit(cfg, rng, cfg.channels, cfg.channels)
                    + _conv_unit(cfg, rng, cfg.channels, cfg.channels))
            layers.append(SEWBlock(body))
        layers.append(MaxPool(2, 2))
    side = cfg.image_size // 32
    layers.append(Flatten())
    layers.append(Linear(cfg.channels * side * side, cfg.num_classes, rng=rng))
    return Sequential(layers)


def build_convmixer(cfg: NetworkConfig, rng) -> Sequential:
    w = cfg.channels
    layers = _conv_unit(cfg, rng, cfg.in_channels, w, k=cfg.patch_size,
                        stride=cfg.patch_size, padding=0)
    for block in range(cfg.depth):
        depthwise = _conv_unit(cfg, rng, w, w, k=cfg.kernel_size,
                               padding=cfg.kernel_size // 2, groups=w)
        layers.append(SEWBlock(depthwise))
        layers += _conv_unit(cfg, rng, w, w, k=1, padding=0)
    layers += [SpatialMean(), TimeMean(),
               Linear(w, cfg.num_classes, rng=rng), ExpandTime()]
    return Sequential(layers)


_BUILDERS = {"cnn": build_cnn, "sew": build_sew, "convmixer": build_convmixer}


def build_network(cfg: NetworkConfig, seed: int = 0) -> Sequential:
    rng = np.random.default_rng(seed)
    return _BUILDERS[cfg.arch](cfg, rng)


def param_count(net: Sequential) -> int:
    from .layers import named_params
    return sum(t.size for _, t, _ in named_params(net))


class _Captured(Exception):
    def __init__(self, out):
        self.out = out


def _forward_until(net: Sequential, x: T.Tensor, n_steps: int, target) -> T.Tensor:
    def capture(layer, out):
        if layer is target:
            raise _Captured(out)

    try:
        net.forward(x, n_steps, training=True, capture=capture)
    except _Captured as c:
        return c.out
    raise UsageError("target layer was never reached during forward")


def data_dependent_init(net: Sequential, x: T.Tensor, n_steps: int,
                        min_std: float = 1e-8) -> int:
    """Initialize weight-normalized layers from activation statistics.

    Every weight-normalized layer first gets g = 1 (and bias = 0).  Then,
    in forward order, each layer's pre-activation statistics over the
    given batch set g to 1/std and, where a bias exists, bias to
    -mean/std, so the layer output is standardized per channel on this
    batch.  Returns the number of layers initialized.
    """
    wn = [l for l in walk(net) if getattr(l, "weight_norm", False)]
    if not wn:
        return 0
    with T.no_grad():
        for layer in wn:
            layer.wn.g.values[:] = 1.0
            if layer.bias is not None:
                layer.bias.values[:] = 0.0
        for layer in wn:
            out = _forward_until(net, x, n_steps, layer)
            axes = (0, 2, 3) if out.ndim == 4 else (0,)
            mu = out.values.mean(axis=axes)
            sigma = out.values.std(axis=axes)
            if sigma.min() < min_std:
                raise DegeneracyError(
                    f"pre-activation std collapsed to {sigma.min():.3e} during "
                    "data-dependent initialization")
            layer.wn.g.values[:] = 1.0 / sigma
            if layer.bias is not None:
                layer.bias.values[:] = -mu / sigma
    return len(wn)


def fold_sequence(x: np.ndarray) -> np.ndarray:
    """(steps, batch, ...) -> (steps*batch, ...) without copying when possible."""
    return x.reshape((x.shape[0] * x.shape[1],) + x.shape[2:])
