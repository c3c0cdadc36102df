"""Slow, obviously-correct reference implementations used to cross-check ops.

Everything here is written as plain loops over definitions, deliberately
sharing no code path with the package under test.
"""

import numpy as np


def matmul_loops(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def conv2d_loops(x, kernel, stride=1, padding=0, groups=1):
    """Direct cross-correlation by summation over the definition."""
    batch, c_in, h, w = x.shape
    c_out, c_g, kh, kw = kernel.shape
    co_g = c_out // groups
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((batch, c_out, h_out, w_out), dtype=np.float64)
    for b in range(batch):
        for co in range(c_out):
            g = co // co_g
            for oh in range(h_out):
                for ow in range(w_out):
                    acc = 0.0
                    for ci in range(c_g):
                        for i in range(kh):
                            for j in range(kw):
                                hi = oh * stride + i - padding
                                wi = ow * stride + j - padding
                                if 0 <= hi < h and 0 <= wi < w:
                                    acc += x[b, g * c_g + ci, hi, wi] * kernel[co, ci, i, j]
                    out[b, co, oh, ow] = acc
    return out


def maxpool2d_loops(x, k, s):
    """Window max plus the row-major index of the first maximal element."""
    batch, c, h, w = x.shape
    h_out = (h - k) // s + 1
    w_out = (w - k) // s + 1
    out = np.zeros((batch, c, h_out, w_out), dtype=np.float64)
    argmax = np.zeros((batch, c, h_out, w_out, 2), dtype=np.int64)
    for b in range(batch):
        for ci in range(c):
            for oh in range(h_out):
                for ow in range(w_out):
                    best = -np.inf
                    bi = bj = 0
                    for i in range(k):
                        for j in range(k):
                            v = x[b, ci, oh * s + i, ow * s + j]
                            if v > best:
                                best = v
                                bi, bj = oh * s + i, ow * s + j
                    out[b, ci, oh, ow] = best
                    argmax[b, ci, oh, ow] = (bi, bj)
    return out, argmax


def cross_entropy_loops(logits, labels):
    batch, classes = logits.shape
    total = 0.0
    for b in range(batch):
        m = max(logits[b, c] for c in range(classes))
        denom = sum(np.exp(logits[b, c] - m) for c in range(classes))
        total += -(logits[b, labels[b]] - m - np.log(denom))
    return total / batch


def atan_surrogate_loops(x, alpha):
    out = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    o = out.reshape(-1)
    for i in range(flat.size):
        o[i] = alpha / (2.0 * (1.0 + (np.pi * alpha * flat[i] / 2.0) ** 2))
    return out


def spike_penalty_loops(spike_seqs):
    """Mean over layers of sum(S^2) / (2 * K * N * B) with K = len(spike_seqs)."""
    k = len(spike_seqs)
    total = 0.0
    for s in spike_seqs:
        n, b = s.shape[0], s.shape[1]
        acc = 0.0
        for idx in np.ndindex(*s.shape):
            acc += s[idx] ** 2
        total += acc / (2.0 * k * n * b)
    return total
