"""Shared numeric helpers for the test suite."""

import numpy as np


def rel_err(a, b, floor=1e-4):
    """Elementwise relative disagreement with an absolute floor for tiny values."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / denom)


def fd_gradient(loss_fn, param, step=1e-6):
    """Central-difference gradient of loss_fn() w.r.t. one leaf Node.

    loss_fn must re-run the forward pass reading param.value; the entries
    are perturbed in place and restored.
    """
    base = param.value
    grad = np.zeros_like(base)
    for i in range(base.size):
        orig = base.flat[i]
        base.flat[i] = orig + step
        hi = float(loss_fn())
        base.flat[i] = orig - step
        lo = float(loss_fn())
        base.flat[i] = orig
        grad.flat[i] = (hi - lo) / (2 * step)
    return grad


def gradcheck(loss_fn, params, step=1e-6, tol=1e-5, floor=1e-4):
    """Compare reverse-mode gradients against central differences.

    Returns the worst relative error across all parameter entries.
    """
    from structnode import tape

    tape.zero_grads(params)
    root = loss_fn()
    tape.backward(root)
    worst = 0.0
    for p in params:
        ad = p.grad if p.grad is not None else np.zeros_like(p.value)
        fd = fd_gradient(lambda: _value(loss_fn()), p, step=step)
        worst = max(worst, rel_err(ad, fd, floor=floor))
    tape.zero_grads(params)
    if tol is not None:
        assert worst < tol, f"gradient mismatch: worst rel err {worst:.3e}"
    return worst


def _value(x):
    from structnode.tape import Node

    return float(x.value) if isinstance(x, Node) else float(x)
