"""Training losses."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..tensor import Tensor, ShapeError

__all__ = ["reconstruction_loss", "cross_entropy"]


def reconstruction_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error over all sampled rays and channels."""
    target = np.asarray(target, dtype=pred.data.dtype)
    if pred.shape != target.shape:
        raise ShapeError("reconstruction_loss", pred.shape, target.shape)
    diff = T.sub(pred, Tensor(target))
    return T.tmean(T.mul(diff, diff))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between softmax(logits) and integer labels."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError("cross_entropy", logits.shape, labels.shape)
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"cross_entropy: label outside [0, {c}): {labels.min()}..{labels.max()}")
    probs = T.softmax(logits)
    picked = T.gather(T.log(probs + 1e-12), labels.reshape(n, 1).astype(np.int64), axis=1)
    return T.neg(T.tmean(picked))
