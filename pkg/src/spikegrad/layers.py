"""Network building blocks operating on folded activations.

All layers take a folded tensor whose leading axis is steps*batch together
with the step count.  Stateless transforms (convolution, normalization,
pooling, linear) simply treat the folded axis as a large batch; only
spiking layers and the time-pooling layers look at the step structure.

Every layer exposes ``params()`` as (name, tensor, decay) triples, where
``decay`` marks parameters subject to L2 regularization: weights and both
weight-normalization parameters decay, biases and normalization affine
parameters do not.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, UsageError
from .neuron import NeuronConfig, unroll_if
from .norm import BatchNorm, WeightNormParam


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base layer: stateless pass-through interface with no parameters."""

    def forward(self, x: T.Tensor, n_steps: int, training: bool,
                capture=None) -> T.Tensor:
        raise NotImplementedError

    def params(self):
        return []

    def children(self):
        return []

    def state(self):
        return {}

    def load_state(self, buffers: dict) -> None:
        for name, values in self.state().items():
            values[:] = buffers[name]


class Conv2d(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, groups: int = 1,
                 bias: bool = True, weight_norm: bool = False,
                 rng: np.random.Generator | None = None):
        if in_channels % groups or out_channels % groups:
            raise ConfigError(
                f"channels in={in_channels} out={out_channels} must divide groups={groups}")
        rng = rng or np.random.default_rng()
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        w = kaiming_uniform(
            rng, (out_channels, in_channels // groups, kernel_size, kernel_size), fan_in)
        self.weight_norm = bool(weight_norm)
        if self.weight_norm:
            self.wn = WeightNormParam(w, axis=0)
            self.weight = None
        else:
            self.wn = None
            self.weight = T.Tensor(w, requires_grad=True)
        self.bias = T.zeros((out_channels,), requires_grad=True) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups
        self.out_channels = out_channels

    def effective_weight(self) -> T.Tensor:
        return self.wn.weight() if self.weight_norm else self.weight

    def forward(self, x, n_steps, training, capture=None):
        out = T.conv2d(x, self.effective_weight(), stride=self.stride,
                       padding=self.padding, groups=self.groups)
        if self.bias is not None:
            out = T.add(out, T.reshape(self.bias, (1, self.out_channels, 1, 1)))
        return out

    def params(self):
        out = []
        if self.weight_norm:
            out += [("wn." + n, t, d) for n, t, d in self.wn.params()]
        else:
            out.append(("weight", self.weight, True))
        if self.bias is not None:
            out.append(("bias", self.bias, False))
        return out


class Linear(Layer):
    """Affine map on (n, in_features) activations; weight stored (in, out)."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 weight_norm: bool = False, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng()
        w = kaiming_uniform(rng, (in_features, out_features), in_features)
        self.weight_norm = bool(weight_norm)
        if self.weight_norm:
            self.wn = WeightNormParam(w, axis=1)
            self.weight = None
        else:
            self.wn = None
            self.weight = T.Tensor(w, requires_grad=True)
        self.bias = T.zeros((out_features,), requires_grad=True) if bias else None
        self.out_features = out_features

    def effective_weight(self) -> T.Tensor:
        return self.wn.weight() if self.weight_norm else self.weight

    def forward(self, x, n_steps, training, capture=None):
        if x.ndim != 2:
            raise UsageError(f"linear layer expects 2-D input, got {x.shape}")
        out = T.matmul(x, self.effective_weight())
        if self.bias is not None:
            out = T.add(out, T.reshape(self.bias, (1, self.out_features)))
        return out

    def params(self):
        out = []
        if self.weight_norm:
            out += [("wn." + n, t, d) for n, t, d in self.wn.params()]
        else:
            out.append(("weight", self.weight, True))
        if self.bias is not None:
            out.append(("bias", self.bias, False))
        return out


class NormLayer(Layer):
    """Batch normalization adapter; folded axis means statistics pool over
    batch and time jointly."""

    def __init__(self, channels: int, mean_only: bool = False, eps: float = 1e-5,
                 momentum: float = 0.1):
        self.bn = BatchNorm(channels, eps=eps, momentum=momentum, mean_only=mean_only)

    def forward(self, x, n_steps, training, capture=None):
        return self.bn.forward(x, training)

    def params(self):
        return self.bn.params()

    def state(self):
        return self.bn.state()

    def load_state(self, buffers):
        self.bn.running_mean[:] = buffers["running_mean"]
        if self.bn.running_var is not None:
            self.bn.running_var[:] = buffers["running_var"]


class IFLayer(Layer):
    """Integrate-and-fire nonlinearity; remembers its latest spike train so
    regularizers can read it after the forward pass."""

    def __init__(self, cfg: NeuronConfig):
        self.cfg = cfg
        self.last_spikes: T.Tensor | None = None
        self.last_steps: int = 0

    def forward(self, x, n_steps, training, capture=None):
        out = unroll_if(x, n_steps, self.cfg)
        self.last_spikes = out
        self.last_steps = n_steps
        return out


class MaxPool(Layer):
    def __init__(self, kernel_size: int, stride: int):
        self.kernel_size = kernel_size
        self.stride = stride

    def forward(self, x, n_steps, training, capture=None):
        return T.maxpool2d(x, self.kernel_size, self.stride)


class Flatten(Layer):
    def forward(self, x, n_steps, training, capture=None):
        n = x.shape[0]
        feat = 1
        for d in x.shape[1:]:
            feat *= d
        return T.reshape(x, (n, feat))


class SpatialMean(Layer):
    """Average over the two spatial axes: (n, c, h, w) -> (n, c)."""

    def forward(self, x, n_steps, training, capture=None):
        if x.ndim != 4:
            raise UsageError(f"spatial mean expects 4-D input, got {x.shape}")
        return T.reduce_mean(x, axis=(2, 3))


class TimeMean(Layer):
    """Average over steps: (steps*batch, f) -> (batch, f)."""

    def forward(self, x, n_steps, training, capture=None):
        if x.shape[0] % n_steps:
            raise UsageError(
                f"folded axis {x.shape[0]} not divisible by n_steps={n_steps}")
        batch = x.shape[0] // n_steps
        return T.reduce_mean(T.reshape(x, (n_steps, batch) + x.shape[1:]), axis=0)


class ExpandTime(Layer):
    """Repeat a per-sequence activation at every step: (batch, f) -> (steps*batch, f)."""

    def forward(self, x, n_steps, training, capture=None):
        shape = (n_steps,) + x.shape
        out = T.expand(T.reshape(x, (1,) + x.shape), shape)
        return T.reshape(out, (n_steps * x.shape[0],) + x.shape[1:])


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, n_steps, training, capture=None):
        for layer in self.layers:
            x = layer.forward(x, n_steps, training, capture)
            if capture is not None:
                capture(layer, x)
        return x

    def children(self):
        return self.layers


class SEWBlock(Layer):
    """Spike-element-wise residual: body(x) + x with ADD as the connect
    function, so two binary trains combine into values in {0, 1, 2}."""

    def __init__(self, body_layers):
        self.body = Sequential(body_layers)

    def forward(self, x, n_steps, training, capture=None):
        out = self.body.forward(x, n_steps, training, capture)
        if out.shape != x.shape:
            raise ConfigError(
                f"residual branch changed shape {x.shape} -> {out.shape}")
        return T.add(out, x)

    def children(self):
        return [self.body]


def walk(layer: Layer):
    """Depth-first traversal yielding the layer and every descendant."""
    yield layer
    for child in layer.children():
        yield from walk(child)


def named_params(root: Layer, prefix: str = ""):
    """(qualified_name, tensor, decay) triples for the whole tree, in
    deterministic forward order."""
    out = [(prefix + name if prefix else name, t, d) for name, t, d in root.params()]
    for i, child in enumerate(root.children()):
        child_prefix = f"{prefix}{i}." if prefix else f"{i}."
        out.extend(named_params(child, child_prefix))
    return out


def named_state(root: Layer, prefix: str = ""):
    out = [(prefix + name if prefix else name, values)
           for name, values in root.state().items()]
    for i, child in enumerate(root.children()):
        child_prefix = f"{prefix}{i}." if prefix else f"{i}."
        out.extend(named_state(child, child_prefix))
    return out


def load_named_state(root: Layer, buffers: dict, prefix: str = "") -> None:
    own = root.state()
    if own:
        root.load_state({name: buffers[prefix + name] for name in own})
    for i, child in enumerate(root.children()):
        child_prefix = f"{prefix}{i}." if prefix else f"{i}."
        load_named_state(child, buffers, child_prefix)


def spike_layers(root: Layer):
    return [l for l in walk(root) if isinstance(l, IFLayer)]
