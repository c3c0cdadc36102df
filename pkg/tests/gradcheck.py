"""Central finite-difference gradient checker for tape-recorded functions."""

import numpy as np

from spikegrad import tensor as T


def fd_gradcheck(fn, inputs, h=1e-5, rtol=1e-4, atol=1e-7, points=50, seed=0):
    """Compare tape gradients of scalar ``fn(*tensors)`` against central differences.

    ``inputs`` are numpy arrays; every input is treated as differentiable.
    At up to ``points`` randomly chosen coordinates per input, perturb by
    +-h and require |fd - ad| <= atol + rtol * |fd|.  Runs in float64.
    """
    rng = np.random.default_rng(seed)
    with T.using_dtype(np.float64):
        tensors = [T.Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
                   for x in inputs]
        out = fn(*tensors)
        T.backward(out)
        grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.values)
                 for t in tensors]

        def value_at(arrays):
            with T.no_grad():
                ts = [T.Tensor(a) for a in arrays]
                return fn(*ts).item()

        base = [t.values.copy() for t in tensors]
        for which, (arr, g) in enumerate(zip(base, grads)):
            n = arr.size
            coords = rng.choice(n, size=min(points, n), replace=False)
            for c in coords:
                idx = np.unravel_index(c, arr.shape)
                plus = [a.copy() for a in base]
                minus = [a.copy() for a in base]
                plus[which][idx] += h
                minus[which][idx] -= h
                fd = (value_at(plus) - value_at(minus)) / (2 * h)
                ad = g[idx]
                err = abs(fd - ad)
                tol = atol + rtol * abs(fd)
                assert err <= tol, (
                    f"input {which} coord {idx}: fd={fd:.10g} ad={ad:.10g} "
                    f"err={err:.3g} tol={tol:.3g}")
    return True


def network_fd_check(loss_fn, params, h=1e-5, rtol=1e-3, atol=1e-8, points=4, seed=0):
    """Finite-difference check against tape gradients for live parameters.

    ``loss_fn()`` rebuilds the forward graph from the current parameter
    values and returns a scalar Tensor.  Each parameter is perturbed in
    place at randomly chosen coordinates.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    out = loss_fn()
    T.backward(out)
    grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.values)
             for p in params]

    def value():
        with T.no_grad():
            return loss_fn().item()

    checked = 0
    for p, g in zip(params, grads):
        coords = rng.choice(p.size, size=min(points, p.size), replace=False)
        for c in coords:
            idx = np.unravel_index(c, p.values.shape)
            orig = p.values[idx]
            p.values[idx] = orig + h
            lp = value()
            p.values[idx] = orig - h
            lm = value()
            p.values[idx] = orig
            fd = (lp - lm) / (2 * h)
            ad = g[idx]
            err = abs(fd - ad)
            tol = atol + rtol * abs(fd)
            assert err <= tol, (
                f"param coord {idx}: fd={fd:.10g} ad={ad:.10g} "
                f"err={err:.3g} tol={tol:.3g}")
            checked += 1
    return checked
