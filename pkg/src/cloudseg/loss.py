"""Soft Jaccard training objective.

For a binary target t and prediction y in [0, 1]^N the loss is

    L(t, y) = -(sum(t*y) + eps) / (sum(t) + sum(y) - sum(t*y) + eps)

i.e. the negative epsilon-regularized intersection-over-union of the soft
prediction.  L lies in [-1, 0); it equals -1 exactly when y == t pointwise,
including the degenerate all-zero case where the eps terms take over.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, EmptyBatch, ShapeMismatch

DEFAULT_EPSILON = 1e-7


def _validate(t: np.ndarray, y: np.ndarray, epsilon: float):
    if epsilon <= 0.0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if t.shape != y.shape:
        raise ShapeMismatch(f"t {t.shape} and y {y.shape} differ")
    if t.size < 1:
        raise ShapeMismatch("loss inputs must contain at least one pixel")
    bad = np.setdiff1d(np.unique(t), [0, 1])
    if bad.size:
        raise DomainError(f"t must be binary, found {bad[:5]}")
    if y.min() < 0.0 or y.max() > 1.0:
        raise DomainError("y values must lie in [0, 1]")


def soft_jaccard_loss(t, y, epsilon: float = DEFAULT_EPSILON) -> float:
    """Loss for one target/prediction pair, any common shape."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate(t, y, epsilon)
    intersection = float(np.sum(t * y))
    union = float(np.sum(t) + np.sum(y)) - intersection
    return -(intersection + epsilon) / (union + epsilon)


def soft_jaccard_gradient(t, y, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Analytic dL/dy, same shape as y.

    With I = sum(t*y) and U = sum(t) + sum(y) - I:
    dL/dy_i = ((I + eps) * (1 - t_i) - t_i * (U + eps)) / (U + eps)^2.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate(t, y, epsilon)
    intersection = np.sum(t * y)
    union = np.sum(t) + np.sum(y) - intersection
    denom = (union + epsilon) ** 2
    return ((intersection + epsilon) * (1.0 - t) - t * (union + epsilon)) / denom


def batch_loss(pairs, epsilon: float = DEFAULT_EPSILON) -> float:
    """Arithmetic mean of per-sample losses over (t, y) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyBatch("batch_loss over zero samples")
    return float(np.mean([soft_jaccard_loss(t, y, epsilon) for t, y in pairs]))


def soft_jaccard_loss_torch(targets, predictions, epsilon: float = DEFAULT_EPSILON):
    """Differentiable batched twin used inside the training loop.

    ``targets`` and ``predictions`` are (B, ...) tensors; the loss is computed
    per sample over all remaining dimensions and averaged over the batch.
    """
    import torch

    if targets.shape != predictions.shape:
        raise ShapeMismatch(f"targets {tuple(targets.shape)} and "
                            f"predictions {tuple(predictions.shape)} differ")
    t = targets.reshape(targets.shape[0], -1)
    y = predictions.reshape(predictions.shape[0], -1)
    intersection = (t * y).sum(dim=1)
    union = t.sum(dim=1) + y.sum(dim=1) - intersection
    per_sample = -(intersection + epsilon) / (union + epsilon)
    return per_sample.mean()
