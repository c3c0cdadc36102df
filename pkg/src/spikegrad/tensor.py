"""Dense tensors with a reverse-mode differentiation tape.

Every trainable computation in the framework is expressed through the ops
in this module.  A ``Tensor`` wraps a numpy array plus an optional gradient
buffer; each op returns a new tensor carrying a backward closure, and
``backward`` replays the recorded tape once in reverse topological order.

Shapes must match elementwise, except that axes of extent 1 broadcast
against the other operand (this covers bias addition and per-channel
scaling); anything else is a configuration error.  There is no implicit
rank promotion: reshape first.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError, UsageError

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True
_DEBUG_CHECKS = False


def set_default_dtype(dtype) -> None:
    """Set the dtype new tensors are created with ('float32' or 'float64')."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"unsupported tensor dtype {dtype!r}")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


def set_debug_checks(enabled: bool) -> None:
    """Toggle post-op finiteness checks (on in the test suite)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (used for evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def using_dtype(dtype):
    """Temporarily switch the default tensor dtype."""
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """N-dimensional float array with an optional gradient slot.

    ``values`` is row-major and owned by the tensor (leaf parameters are
    mutated in place by optimizers).  ``grad`` is lazily allocated during
    backward and always matches ``values`` in shape.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, values, requires_grad: bool = False):
        # owns its buffer: optimizers mutate values in place
        self.values = np.array(values, dtype=_DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self.grad = None
        self._parents: tuple = ()
        self._backward: Callable[[], None] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Constant view of this tensor: same values, outside the tape."""
        out = Tensor.__new__(Tensor)
        out.values = self.values
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        out._op = "detach"
        return out

    def __repr__(self) -> str:
        return f"Tensor(op={self._op}, shape={self.shape}, requires_grad={self.requires_grad})"


def _node(values: np.ndarray, parents: Sequence[Tensor], op: str,
          backward: Callable[[Tensor, np.ndarray], None] | None) -> Tensor:
    """Create an op-result tensor, recording parents only when grads can flow."""
    if _DEBUG_CHECKS and not np.all(np.isfinite(values)):
        raise ArithmeticError(f"non-finite values produced by op '{op}'")
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out._op = op
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = None if backward is None else (lambda: backward(out, out.grad))
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def backward(root: Tensor) -> None:
    """Populate gradients of ``root`` w.r.t. every reachable grad-tracked tensor.

    Accumulation is additive across fan-out; each tape node's rule runs
    exactly once, in reverse topological order.

    Consumes the graph: each visited node drops its parent links and
    rule once used, so intermediate buffers free as soon as the caller's
    own references die (node rules self-reference through their closure,
    which reference counting alone cannot reclaim).  Tensors that have
    been through backward act as constant leaves afterwards.
    """
    if root.values.size != 1:
        raise UsageError(f"backward root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.values)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()
        node._parents = ()
        node._backward = None


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def _as_values(b):
    if isinstance(b, Tensor):
        return b.values, b
    return np.asarray(b, dtype=_DEFAULT_DTYPE), None


def _check_elementwise(ash: tuple, bsh: tuple, op: str) -> None:
    if ash == bsh:
        return
    if len(bsh) == 0 or len(ash) == 0:
        return
    if len(ash) != len(bsh) or any(m != n and 1 not in (m, n) for m, n in zip(ash, bsh)):
        raise ConfigError(f"{op}: incompatible shapes {ash} and {bsh}")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes the operand broadcast along."""
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return g.sum()
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True)


def add(a: Tensor, b) -> Tensor:
    bv, bt = _as_values(b)
    _check_elementwise(a.shape, bv.shape, "add")
    parents = (a, bt) if bt is not None else (a,)

    def back(out, g):
        _accumulate(a, _reduce_to(g, a.shape))
        if bt is not None:
            _accumulate(bt, _reduce_to(g, bt.shape))

    return _node(a.values + bv, parents, "add", back)


def sub(a: Tensor, b) -> Tensor:
    bv, bt = _as_values(b)
    _check_elementwise(a.shape, bv.shape, "sub")
    parents = (a, bt) if bt is not None else (a,)

    def back(out, g):
        _accumulate(a, _reduce_to(g, a.shape))
        if bt is not None:
            _accumulate(bt, -_reduce_to(g, bt.shape))

    return _node(a.values - bv, parents, "sub", back)


def mul(a: Tensor, b) -> Tensor:
    bv, bt = _as_values(b)
    _check_elementwise(a.shape, bv.shape, "mul")
    parents = (a, bt) if bt is not None else (a,)

    def back(out, g):
        _accumulate(a, _reduce_to(g * bv, a.shape))
        if bt is not None:
            _accumulate(bt, _reduce_to(g * a.values, bt.shape))

    return _node(a.values * bv, parents, "mul", back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def back(out, g):
        _accumulate(a, g * c)

    return _node(a.values * c, (a,), "scale", back)


def square(a: Tensor) -> Tensor:
    def back(out, g):
        _accumulate(a, g * (2.0 * a.values))

    return _node(a.values * a.values, (a,), "square", back)


def powf(a: Tensor, p: float) -> Tensor:
    """Elementwise float power; caller guarantees the base domain."""
    p = float(p)
    with np.errstate(invalid="ignore"):
        out_values = a.values ** p

    def back(out, g):
        _accumulate(a, g * (p * a.values ** (p - 1.0)))

    return _node(out_values, (a,), "powf", back)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "scale": scale, "square": square}


def elementwise(op: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by name; 'square' is unary, 'scale' takes a python scalar."""
    if op not in _ELEMENTWISE:
        raise UsageError(f"unknown elementwise op {op!r}")
    if op == "square":
        return square(a)
    return _ELEMENTWISE[op](a, b)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out_values = a.values.reshape(shape)
    except ValueError as e:
        raise ConfigError(f"reshape: cannot view {a.shape} as {shape}: {e}") from None

    def back(out, g):
        _accumulate(a, g.reshape(a.shape))

    return _node(out_values, (a,), "reshape", back)


def expand(a: Tensor, shape) -> Tensor:
    """Explicit broadcast of singleton axes up to ``shape``."""
    shape = tuple(shape)
    if len(shape) != a.ndim or any(m != n and m != 1 for m, n in zip(a.shape, shape)):
        raise ConfigError(f"expand: cannot broadcast {a.shape} to {shape}")
    out_values = np.broadcast_to(a.values, shape)

    def back(out, g):
        _accumulate(a, _reduce_to(g, a.shape))

    return _node(out_values, (a,), "expand", back)


def _normalize_axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    out_values = a.values.sum(axis=axes, keepdims=keepdims)

    def back(out, g):
        gk = g if keepdims else np.expand_dims(g, axes) if axes else g
        _accumulate(a, np.broadcast_to(gk, a.shape))

    return _node(out_values, (a,), "reduce_sum", back)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    out_values = a.values.mean(axis=axes, keepdims=keepdims)

    def back(out, g):
        gk = g if keepdims else np.expand_dims(g, axes) if axes else g
        _accumulate(a, np.broadcast_to(gk, a.shape) / count)

    return _node(out_values, (a,), "reduce_mean", back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise UsageError("concat of zero tensors")
    out_values = np.concatenate([t.values for t in tensors], axis=axis)
    offsets = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(out, g):
        index = [slice(None)] * g.ndim
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index[axis] = slice(start, stop)
            _accumulate(t, g[tuple(index)])

    return _node(out_values, tuple(tensors), "concat", back)


def slice0(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice along axis 0."""
    if not (0 <= start < stop <= a.shape[0]):
        raise UsageError(f"slice0 [{start}:{stop}] out of range for {a.shape}")
    out_values = a.values[start:stop]

    def back(out, g):
        if a.grad is None:
            a.grad = np.zeros_like(a.values)
        a.grad[start:stop] += g

    return _node(out_values, (a,), "slice0", back if a.requires_grad else None)


# ---------------------------------------------------------------------------
# linear algebra and convolution
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ConfigError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")

    def back(out, g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _node(a.values @ b.values, (a, b), "matmul", back)


def _conv_geometry(x_shape, k_shape, stride, padding, groups):
    batch, c_in, h, w = x_shape
    c_out, c_in_g, kh, kw = k_shape
    if groups < 1 or c_in % groups or c_out % groups:
        raise ConfigError(
            f"conv2d: channels in={c_in} out={c_out} not divisible by groups={groups}")
    if c_in_g != c_in // groups:
        raise ConfigError(
            f"conv2d: kernel expects {c_in_g} input channels per group, input has {c_in // groups}")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h + 2 * padding < kh or w + 2 * padding < kw or h_out <= 0 or w_out <= 0:
        raise ConfigError(
            f"conv2d: kernel {kh}x{kw} stride {stride} pad {padding} gives "
            f"non-positive output for input {h}x{w}")
    return batch, c_in, c_out, kh, kw, h_out, w_out


def _im2col(xv: np.ndarray, kh: int, kw: int, stride: int, padding: int, groups: int):
    """Lower padded input windows to (groups, rows, c_in_g*kh*kw) for one matmul."""
    batch, c_in = xv.shape[:2]
    c_g = c_in // groups
    xp = np.pad(xv, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xv
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = win.shape[2], win.shape[3]
    win = win.reshape(batch, groups, c_g, h_out, w_out, kh, kw)
    cols = win.transpose(1, 0, 3, 4, 2, 5, 6).reshape(groups, batch * h_out * w_out, c_g * kh * kw)
    return np.ascontiguousarray(cols), h_out, w_out


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0,
           groups: int = 1) -> Tensor:
    """2-D cross-correlation (no kernel flip) over NCHW input.

    The backward pass recomputes the lowered column matrix from the saved
    input instead of keeping it alive on the tape; the input gradient is
    assembled by the strided col2im scatter, which is overlap-safe because
    each kernel offset writes a disjoint strided slice.
    """
    batch, c_in, c_out, kh, kw, h_out, w_out = _conv_geometry(
        x.shape, kernel.shape, stride, padding, groups)
    c_g = c_in // groups
    co_g = c_out // groups
    cols, _, _ = _im2col(x.values, kh, kw, stride, padding, groups)
    wmat = kernel.values.reshape(groups, co_g, c_g * kh * kw).transpose(0, 2, 1)
    out = np.matmul(cols, wmat)  # (groups, batch*h_out*w_out, co_g)
    out_values = (out.reshape(groups, batch, h_out, w_out, co_g)
                  .transpose(1, 0, 4, 2, 3)
                  .reshape(batch, c_out, h_out, w_out))
    out_values = np.ascontiguousarray(out_values)

    def back(out_t, g):
        h, w = x.shape[2], x.shape[3]
        gg = (g.reshape(batch, groups, co_g, h_out, w_out)
              .transpose(1, 0, 3, 4, 2)
              .reshape(groups, batch * h_out * w_out, co_g))
        if kernel.requires_grad:
            cols_b, _, _ = _im2col(x.values, kh, kw, stride, padding, groups)
            dw = np.matmul(cols_b.transpose(0, 2, 1), gg)  # (groups, c_g*kh*kw, co_g)
            _accumulate(kernel, dw.transpose(0, 2, 1).reshape(kernel.shape))
        if x.requires_grad:
            dcols = np.matmul(gg, kernel.values.reshape(groups, co_g, c_g * kh * kw))
            dwin = (dcols.reshape(groups, batch, h_out, w_out, c_g, kh, kw)
                    .transpose(1, 0, 4, 2, 3, 5, 6)
                    .reshape(batch, c_in, h_out, w_out, kh, kw))
            hp, wp = h + 2 * padding, w + 2 * padding
            dxp = np.zeros((batch, c_in, hp, wp), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * h_out:stride,
                        j:j + stride * w_out:stride] += dwin[:, :, :, :, i, j]
            dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
            _accumulate(x, dx)

    return _node(out_values, (x, kernel), "conv2d", back)


def maxpool2d(x: Tensor, k: int, s: int) -> Tensor:
    """Per-window max; backward routes gradient to the first argmax in
    row-major scan order of each window."""
    batch, c, h, w = x.shape
    if h < k or w < k:
        raise ConfigError(f"maxpool2d: window {k}x{k} larger than input {h}x{w}")
    win = sliding_window_view(x.values, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    h_out, w_out = win.shape[2], win.shape[3]
    flat = win.reshape(batch, c, h_out, w_out, k * k)
    arg = flat.argmax(axis=-1)
    out_values = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out_values = np.ascontiguousarray(out_values)

    def back(out, g):
        bi, ci, oh, ow = np.indices((batch, c, h_out, w_out), sparse=False)
        hi = oh * s + arg // k
        wi = ow * s + arg % k
        flat_idx = ((bi * c + ci) * h + hi) * w + wi
        dx = np.zeros(batch * c * h * w, dtype=g.dtype)
        np.add.at(dx, flat_idx.ravel(), g.ravel())
        _accumulate(x, dx.reshape(x.shape))

    return _node(out_values, (x,), "maxpool2d", back)


# ---------------------------------------------------------------------------
# task loss primitive
# ---------------------------------------------------------------------------

def cross_entropy_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Softmax cross-entropy of (batch, classes) logits, mean over the batch.

    Stabilized by per-row max subtraction; backward is (softmax - onehot)/B.
    """
    if logits.ndim != 2:
        raise ConfigError(f"cross_entropy_logits expects 2-D logits, got {logits.shape}")
    labels = np.asarray(labels)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise DataError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= classes:
        raise DataError(f"labels out of range [0,{classes})")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    ez = np.exp(z)
    softmax = ez / ez.sum(axis=1, keepdims=True)
    nll = -(z[np.arange(batch), labels] - np.log(ez.sum(axis=1)))
    out_values = np.asarray(nll.mean(), dtype=logits.values.dtype)

    def back(out, g):
        d = softmax.copy()
        d[np.arange(batch), labels] -= 1.0
        _accumulate(logits, d * (float(g) / batch))

    return _node(out_values, (logits,), "cross_entropy", back)


# ---------------------------------------------------------------------------
# custom-op hook for other modules (spike nonlinearities live in neuron.py)
# ---------------------------------------------------------------------------

def unary_from_rule(a: Tensor, out_values: np.ndarray, grad_rule: Callable[[np.ndarray], np.ndarray],
                    op: str) -> Tensor:
    """Build a unary tape node from precomputed values and a local gradient rule.

    ``grad_rule(x_values)`` returns d(out)/d(x) evaluated elementwise; the
    closure multiplies it with the upstream gradient.
    """
    def back(out, g):
        _accumulate(a, g * grad_rule(a.values))

    return _node(np.asarray(out_values, dtype=a.values.dtype), (a,), op, back)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=_DEFAULT_DTYPE), requires_grad=requires_grad)
