"""Finite-difference gradient checking for the autodiff primitives.

Central differences at 64-bit are the independent oracle: for a scalar-valued
function f built from tape ops, the analytic df/dx from `backward` must match
(f(x+h) - f(x-h)) / 2h elementwise.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .engine import Tensor, backward, no_grad

__all__ = ["numerical_gradient", "max_rel_error", "check_gradients"]


def numerical_gradient(fn: Callable[..., Tensor], tensors: Sequence[Tensor],
                       which: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar fn w.r.t. tensors[which]."""
    target = tensors[which]
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn(*tensors).data)
            flat[i] = orig - h
            fm = float(fn(*tensors).data)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Elementwise |a-b| / max(|a|, |b|, 1), reduced by max."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom))


def check_gradients(fn: Callable[..., Tensor], tensors: Sequence[Tensor],
                    h: float = 1e-5) -> float:
    """Run fn once through the tape, backprop, and compare every input's
    analytic gradient against central differences. Returns the worst relative
    error across all inputs. Inputs must be float64 for the comparison to be
    meaningful."""
    for t in tensors:
        if t.data.dtype != np.float64:
            raise TypeError("gradient checks require float64 inputs")
        t.zero_grad()
    out = fn(*tensors)
    backward(out)
    worst = 0.0
    for i, t in enumerate(tensors):
        if not t.requires_grad:
            continue
        num = numerical_gradient(fn, tensors, i, h=h)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, max_rel_error(ana, num))
    return worst
