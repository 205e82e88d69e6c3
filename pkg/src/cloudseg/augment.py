"""Paired geometric augmentation for (spectral patch, mask) training samples.

Transforms are axis-aligned (horizontal flip, 90-degree rotations, zoom-in
with center crop) so binary labels survive without interpolation artifacts.
Each sample draw is taken from an explicit random generator, which keeps the
per-epoch augmentation stream reproducible under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeMismatch
from . import tiling
from .tiling import BILINEAR, BINARY, NEAREST, MaskPatch, SpectralPatch

ROTATION_DEGREES = (0, 90, 180, 270)


@dataclass(frozen=True)
class AugmentationPolicy:
    flip_probability: float = 0.5
    rotation_choices: tuple = ROTATION_DEGREES
    zoom_range: tuple = (1.0, 1.2)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError(f"flip_probability must be in [0, 1], got {self.flip_probability}")
        if not self.rotation_choices:
            raise ConfigError("rotation_choices must not be empty")
        bad = set(self.rotation_choices) - set(ROTATION_DEGREES)
        if bad:
            raise ConfigError(f"rotations must be multiples of 90 in {ROTATION_DEGREES}, got {bad}")
        lo, hi = self.zoom_range
        if lo < 1.0 or hi < lo:
            raise ConfigError(f"zoom_range must satisfy 1.0 <= lo <= hi, got {self.zoom_range}")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentationPolicy":
        """A policy whose every draw is the identity transform."""
        return cls(flip_probability=0.0, rotation_choices=(0,), zoom_range=(1.0, 1.0),
                   seed=seed)


@dataclass(frozen=True)
class GeometricTransform:
    """One sampled transform, applied identically to patch and mask."""

    flip_horizontal: bool = False
    rotation_degrees: int = 0
    zoom: float = 1.0


def sample_transform(policy: AugmentationPolicy, draw: np.random.Generator) -> GeometricTransform:
    """Draw one transform from the policy; consumes exactly three variates."""
    flip = draw.random() < policy.flip_probability
    rotation = int(draw.choice(np.asarray(policy.rotation_choices)))
    lo, hi = policy.zoom_range
    zoom = float(draw.uniform(lo, hi))
    return GeometricTransform(flip_horizontal=flip, rotation_degrees=rotation, zoom=zoom)


def apply_transform(array: np.ndarray, transform: GeometricTransform, method: str) -> np.ndarray:
    """Apply a transform to an (S, S[, C]) array; output keeps the input side."""
    out = np.asarray(array)
    side = out.shape[0]
    if transform.flip_horizontal:
        out = np.flip(out, axis=1)
    if transform.rotation_degrees % 360:
        out = np.rot90(out, k=(transform.rotation_degrees // 90) % 4, axes=(0, 1))
    scaled = int(round(side * transform.zoom))
    if scaled > side:
        out = tiling.resize_array(np.ascontiguousarray(out), scaled, method)
        off = (scaled - side) // 2
        out = out[off:off + side, off:off + side]
    return np.ascontiguousarray(out)


def augment_pair(patch: SpectralPatch, mask: MaskPatch, policy: AugmentationPolicy,
                 draw: np.random.Generator):
    """Apply one policy draw to a (patch, mask) pair; geometry stays identical."""
    if mask.kind != BINARY:
        raise ShapeMismatch("augment_pair expects a binary mask patch")
    if patch.pixels.shape[:2] != mask.values.shape:
        raise ShapeMismatch(
            f"patch {patch.pixels.shape[:2]} and mask {mask.values.shape} disagree")
    transform = sample_transform(policy, draw)
    new_pixels, new_values = augment_arrays(patch.pixels, mask.values, transform)
    return (SpectralPatch(patch.grid_row, patch.grid_col, new_pixels),
            MaskPatch(mask.grid_row, mask.grid_col, new_values, kind=BINARY))


def augment_arrays(pixels: np.ndarray, mask: np.ndarray, transform: GeometricTransform):
    """Array-level twin of augment_pair for hot training loops."""
    return (apply_transform(pixels, transform, BILINEAR),
            apply_transform(mask, transform, NEAREST))
