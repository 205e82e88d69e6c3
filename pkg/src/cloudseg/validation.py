"""Array validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NonBinaryInput, ShapeMismatch
from .tiling import normalize_array


def as_patch_batch(X) -> np.ndarray:
    """Coerce to a (N, S, S, 4) float32 batch with values in [0, 1].

    Accepts a single (S, S, 4) patch or a batch; raw uint16 data is
    normalized by the sensor maximum.
    """
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[None, ...]
    if X.ndim != 4 or X.shape[3] != 4:
        raise ShapeMismatch(f"expected (N, S, S, 4) spectral batch, got {X.shape}")
    if X.shape[1] != X.shape[2]:
        raise ShapeMismatch(f"patches must be square, got {X.shape[1]}x{X.shape[2]}")
    if X.dtype == np.uint16:
        return normalize_array(X)
    X = X.astype(np.float32, copy=False)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise DomainError("float reflectance values must lie in [0, 1]")
    return X


def as_mask_batch(y, batch: np.ndarray) -> np.ndarray:
    """Coerce to a (N, S, S) uint8 binary batch paired with ``batch``."""
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None, ...]
    if y.ndim == 4 and y.shape[3] == 1:
        y = y[..., 0]
    if y.shape != batch.shape[:3]:
        raise ShapeMismatch(f"masks {y.shape} do not pair with patches {batch.shape}")
    values = np.unique(y)
    if not np.isin(values, (0, 1)).all():
        raise NonBinaryInput(f"masks must be binary, found values {values[:5]}")
    return y.astype(np.uint8, copy=False)
