"""Central finite-difference gradient checking.

The numerical side only ever calls the forward pass, so it stays independent
of every backward closure it checks.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward


def numerical_gradient(fn, arrays, h=1e-5):
    """d fn / d array for each array, by central differences (arrays perturbed in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            fp = fn()
            arr[idx] = orig - h
            fm = fn()
            arr[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(a, b, floor=1e-8):
    """``|a - b| / max(|a|, |b|)``; gradients that both vanish (norm < floor) compare absolutely."""
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    diff = float(np.linalg.norm(a - b))
    return diff if denom < floor else diff / denom


def check_gradients(build_loss, tensors, h=1e-5):
    """Compare tape gradients of ``build_loss()`` against finite differences.

    ``build_loss`` must read the (mutable) ``.data`` of ``tensors`` and return a
    scalar Tensor. Returns the worst relative error over all tensors.
    """
    for t in tensors:
        t.requires_grad = True
        t.grad = None if not hasattr(t, "trainable") else np.zeros_like(t.data)
    with Tape() as tape:
        loss = build_loss()
    backward(loss, tape)
    analytic = [t.grad.copy() for t in tensors]

    def scalar():
        return float(build_loss().data)

    numeric = numerical_gradient(scalar, [t.data for t in tensors], h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def projected(out: Tensor, weights: np.ndarray):
    """Scalar ``sum(out * weights)``; a random projection makes every output entry matter."""
    from . import ops
    return ops.sum(ops.mul(out, weights))
