"""Synthetic fixtures: bright-square "clouds" on a dim, noisy background.

Used by the test suite and by anyone wanting a smoke-test dataset without
real imagery.  The geometry is easy on purpose so a small network can
overfit it quickly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .raster_io import BAND_ORDER, SpectralScene, write_raster
from .tiling import _U16_MAX

# Per-band brightness multipliers; clouds are bright in all four bands.
_BAND_GAIN = np.array([1.0, 0.95, 0.9, 0.85], dtype=np.float32)


def _paint(rng: np.random.Generator, height: int, width: int,
           n_squares: int):
    """Reflectance (H, W, 4) float32 in [0, 1] and its binary cloud mask."""
    base = rng.uniform(0.10, 0.25)
    pixels = np.empty((height, width, 4), dtype=np.float32)
    noise = rng.normal(0.0, 0.02, size=(height, width)).astype(np.float32)
    mask = np.zeros((height, width), dtype=np.uint8)
    for _ in range(n_squares):
        side = int(rng.integers(min(height, width) // 4, min(height, width) // 2 + 1))
        top = int(rng.integers(0, height - side + 1))
        left = int(rng.integers(0, width - side + 1))
        mask[top:top + side, left:left + side] = 1
    level = np.where(mask == 1, rng.uniform(0.75, 0.9), base).astype(np.float32)
    for b in range(4):
        pixels[:, :, b] = np.clip(level * _BAND_GAIN[b] + noise, 0.0, 1.0)
    return pixels, mask


def synthetic_patch_set(n_patches: int = 8, side: int = 64, seed: int = 0):
    """(N, S, S, 4) float32 patches in [0, 1] plus (N, S, S) binary masks."""
    rng = np.random.default_rng(seed)
    xs = np.empty((n_patches, side, side, 4), dtype=np.float32)
    ys = np.empty((n_patches, side, side), dtype=np.uint8)
    for i in range(n_patches):
        xs[i], ys[i] = _paint(rng, side, side, n_squares=1)
    return xs, ys


def make_scene(scene_id: str, height: int, width: int, seed: int = 0,
               n_squares: int = 3):
    """A raw uint16 scene plus its binary ground-truth mask."""
    rng = np.random.default_rng(seed)
    pixels, mask = _paint(rng, height, width, n_squares=n_squares)
    bands = np.round(pixels * _U16_MAX).astype(np.uint16)
    return SpectralScene(scene_id=scene_id, bands=bands), mask


def write_synthetic_dataset(root, train_scenes: int = 2, test_scenes: int = 1,
                            height: int = 768, width: int = 768, seed: int = 0):
    """Write raw scene directories: ``<root>/<split>/<scene_id>/<band>.TIF``.

    Every scene also gets a ``gt.TIF`` so both splits can be evaluated.
    Returns the root path.
    """
    root = Path(root)
    counters = {"train": train_scenes, "test": test_scenes}
    scene_seed = seed
    for split, count in counters.items():
        for i in range(count):
            scene_id = f"{split}_scene_{i:02d}"
            scene, mask = make_scene(scene_id, height, width, seed=scene_seed)
            scene_dir = root / split / scene_id
            for b, name in enumerate(BAND_ORDER):
                write_raster(scene_dir / f"{name}.TIF", scene.bands[:, :, b])
            write_raster(scene_dir / "gt.TIF", (mask * 255).astype(np.uint8))
            scene_seed += 1
    return root
