"""Adam optimizer with bias correction, operating on named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .engine import Tensor

__all__ = ["AdamState", "adam_step", "GradientError"]


class GradientError(RuntimeError):
    """Raised when a gradient is missing or non-finite; carries the parameter name."""


@dataclass
class AdamState:
    """First/second moment buffers per parameter plus the shared step count."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], state: AdamState, lr: float,
              grads: Optional[Dict[str, np.ndarray]] = None) -> AdamState:
    """One in-place Adam update over `params`.

    Gradients come from `grads` if given, else from each tensor's .grad.
    Raises GradientError naming the parameter if a gradient is absent or
    contains NaN/inf.
    """
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            raise GradientError(f"no gradient for parameter {name!r}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for parameter {name!r}")
        if g.shape != p.data.shape:
            raise GradientError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(p.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= lr * mhat / (np.sqrt(vhat) + state.epsilon)
    return state
