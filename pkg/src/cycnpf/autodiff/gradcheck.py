"""Finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .tensor import backward


def numeric_grad(fn, tensor, eps=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. every element of ``tensor.data``."""
    grad = np.zeros(tensor.data.shape, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(fn().data)
        flat[i] = orig - eps
        down = float(fn().data)
        flat[i] = orig
        out[i] = (up - down) / (2 * eps)
    return grad


def grad_check(fn, params, eps=1e-5, per: str = "element"):
    """Max relative error between analytic and central-difference gradients.

    ``fn`` builds a fresh graph and returns a scalar Tensor; ``params`` maps
    names to the leaf Tensors to check (use float64 data).

    ``per="element"``: error per element is ``|a - n| / max(1e-8, |a| + |n|)``.
    ``per="tensor"``: error per tensor is ``max|a - n| / max(max|a|, max|n|)``,
    which ignores elements lying below the finite-difference noise floor of
    deep composite losses.
    """
    if per not in ("element", "tensor"):
        raise ValueError(f"per must be 'element' or 'tensor', got {per!r}")
    total = sum(p.data.size for p in params.values())
    if total > 10_000:
        raise ValueError(f"grad_check is limited to 10^4 parameters, got {total}")
    for p in params.values():
        p.grad = None
    analytic = backward(fn(), params)
    worst = 0.0
    for name, p in params.items():
        num = numeric_grad(fn, p, eps)
        a = analytic[name]
        if per == "element":
            rel = np.abs(a - num) / np.maximum(1e-8, np.abs(a) + np.abs(num))
            worst = max(worst, float(rel.max(initial=0.0)))
        else:
            scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(num).max(initial=0.0)))
            if scale > 0:
                worst = max(worst, float(np.abs(a - num).max()) / scale)
    return worst
