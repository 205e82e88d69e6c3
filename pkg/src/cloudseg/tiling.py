"""Patch tiling: cut scenes into fixed-size tiles, normalize, resize, stitch.

Scenes whose dimensions are not multiples of the patch size are zero-padded
on the bottom/right; ``stitch`` crops the padding back off, so
``stitch(cut(x)) == x`` for every scene size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import (
    DomainError,
    DuplicatePatch,
    InvalidMethod,
    MissingPatch,
    ShapeMismatch,
)
from .raster_io import BAND_ORDER, SpectralScene

PATCH_SIZE = 384
MODEL_INPUT_SIDE = 192

BILINEAR = "bilinear"
NEAREST = "nearest"

PROBABILITY = "probability"
BINARY = "binary"

_U16_MAX = 65535.0


@dataclass(frozen=True)
class PatchGrid:
    """Tile geometry of one scene: grid counts plus bottom/right zero padding."""

    scene_id: str
    scene_h: int
    scene_w: int
    patch_size: int
    rows: int
    cols: int
    pad_bottom: int
    pad_right: int

    @classmethod
    def for_scene(cls, scene_id: str, scene_h: int, scene_w: int,
                  patch_size: int = PATCH_SIZE) -> "PatchGrid":
        if scene_h < 1 or scene_w < 1 or patch_size < 1:
            raise DomainError(f"invalid grid geometry: {scene_h}x{scene_w}, patch {patch_size}")
        rows = math.ceil(scene_h / patch_size)
        cols = math.ceil(scene_w / patch_size)
        return cls(scene_id, scene_h, scene_w, patch_size, rows, cols,
                   rows * patch_size - scene_h, cols * patch_size - scene_w)

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols


@dataclass
class SpectralPatch:
    """One 4-channel tile; uint16 raw from cutting, unit-interval float once normalized."""

    grid_row: int
    grid_col: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != len(BAND_ORDER):
            raise ShapeMismatch(f"patch must be (S, S, 4), got {self.pixels.shape}")
        if np.issubdtype(self.pixels.dtype, np.floating):
            if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
                raise DomainError("normalized patch values must lie in [0, 1]")

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


@dataclass
class MaskPatch:
    """One single-channel tile of probabilities in [0,1] or binary labels."""

    grid_row: int
    grid_col: int
    values: np.ndarray
    kind: str = BINARY

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ShapeMismatch(f"mask patch must be 2-D, got {self.values.shape}")
        if self.kind == BINARY:
            bad = np.setdiff1d(np.unique(self.values), [0, 1])
            if bad.size:
                raise DomainError(f"binary mask patch contains {bad[:5]}")
        elif self.kind == PROBABILITY:
            if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
                raise DomainError("probability mask patch values must lie in [0, 1]")
        else:
            raise DomainError(f"unknown mask kind {self.kind!r}")

    @property
    def side(self) -> int:
        return self.values.shape[0]


def cut_array(array: np.ndarray, patch_size: int = PATCH_SIZE):
    """Zero-pad an (H, W[, C]) array and split it into non-overlapping tiles.

    Returns ``(rows, cols, tiles)`` where ``tiles[r][c]`` holds the pixels of
    grid cell (r, c); cell (r, c) covers scene rows [r*P, (r+1)*P) and
    columns [c*P, (c+1)*P), with out-of-scene pixels zero.
    """
    array = np.asarray(array)
    h, w = array.shape[:2]
    grid = PatchGrid.for_scene("", h, w, patch_size)
    pad = [(0, grid.pad_bottom), (0, grid.pad_right)] + [(0, 0)] * (array.ndim - 2)
    padded = np.pad(array, pad, mode="constant", constant_values=0)
    tiles = [
        [padded[r * patch_size:(r + 1) * patch_size,
                c * patch_size:(c + 1) * patch_size] for c in range(grid.cols)]
        for r in range(grid.rows)
    ]
    return grid.rows, grid.cols, tiles


def cut_patches(scene: SpectralScene, patch_size: int = PATCH_SIZE):
    """Cut a scene into raw uint16 spectral patches in row-major grid order."""
    grid = PatchGrid.for_scene(scene.scene_id, scene.height, scene.width, patch_size)
    _, _, tiles = cut_array(scene.bands, patch_size)
    patches = [SpectralPatch(r, c, tiles[r][c])
               for r in range(grid.rows) for c in range(grid.cols)]
    return grid, patches


def cut_mask(mask: np.ndarray, scene_id: str = "", patch_size: int = PATCH_SIZE,
             kind: str = BINARY):
    """Cut a scene-sized mask into MaskPatch tiles (same geometry as cut_patches)."""
    mask = np.asarray(mask)
    grid = PatchGrid.for_scene(scene_id, mask.shape[0], mask.shape[1], patch_size)
    _, _, tiles = cut_array(mask, patch_size)
    patches = [MaskPatch(r, c, tiles[r][c], kind=kind)
               for r in range(grid.rows) for c in range(grid.cols)]
    return grid, patches


def normalize_array(raw: np.ndarray) -> np.ndarray:
    """Map raw digital numbers in [0, 65535] onto [0, 1] as float32."""
    raw = np.asarray(raw)
    if np.issubdtype(raw.dtype, np.floating):
        lo, hi = (raw.min(), raw.max()) if raw.size else (0.0, 0.0)
        if lo < 0.0 or hi > _U16_MAX:
            raise DomainError(f"raw values outside [0, 65535]: [{lo}, {hi}]")
    return (raw.astype(np.float32) / np.float32(_U16_MAX)).astype(np.float32)


def normalize(patch: SpectralPatch) -> SpectralPatch:
    """Normalize a raw spectral patch by the full 16-bit range."""
    return SpectralPatch(patch.grid_row, patch.grid_col, normalize_array(patch.pixels))


def resize_array(array: np.ndarray, target_side: int, method: str) -> np.ndarray:
    """Resize an (S, S[, C]) array to (target, target[, C])."""
    if target_side < 1:
        raise DomainError(f"target side must be positive, got {target_side}")
    if method == BILINEAR:
        interp = cv2.INTER_LINEAR
    elif method == NEAREST:
        interp = cv2.INTER_NEAREST
    else:
        raise InvalidMethod(f"unknown resize method {method!r}")
    array = np.asarray(array)
    if array.shape[0] == target_side and array.shape[1] == target_side:
        return array.copy()
    out = cv2.resize(array, (target_side, target_side), interpolation=interp)
    return out.reshape(target_side, target_side, *array.shape[2:])


def resize_patch(patch, target_side: int, method: str = BILINEAR):
    """Resize a SpectralPatch or MaskPatch; binary masks must use nearest."""
    if isinstance(patch, SpectralPatch):
        return SpectralPatch(patch.grid_row, patch.grid_col,
                             resize_array(patch.pixels, target_side, method))
    if isinstance(patch, MaskPatch):
        if patch.kind == BINARY and method != NEAREST:
            raise InvalidMethod("binary masks must be resized with nearest")
        return MaskPatch(patch.grid_row, patch.grid_col,
                         resize_array(patch.values, target_side, method), kind=patch.kind)
    raise TypeError(f"cannot resize {type(patch).__name__}")


def stitch(grid: PatchGrid, patches) -> np.ndarray:
    """Reassemble mask patches into a scene-sized mask, cropping the padding.

    Requires exactly one patch per grid cell at the grid's patch size.
    """
    ps = grid.patch_size
    cells = {}
    for patch in patches:
        key = (patch.grid_row, patch.grid_col)
        if key in cells:
            raise DuplicatePatch(f"grid cell {key} supplied twice")
        if not (0 <= patch.grid_row < grid.rows and 0 <= patch.grid_col < grid.cols):
            raise MissingPatch(f"patch at {key} lies outside the {grid.rows}x{grid.cols} grid")
        if patch.values.shape != (ps, ps):
            raise ShapeMismatch(
                f"patch at {key} has side {patch.values.shape}, expected {(ps, ps)}")
        cells[key] = patch.values
    missing = [(r, c) for r in range(grid.rows) for c in range(grid.cols)
               if (r, c) not in cells]
    if missing:
        raise MissingPatch(f"grid cells without patches: {missing[:5]}")

    canvas = np.zeros((grid.rows * ps, grid.cols * ps), dtype=next(iter(cells.values())).dtype)
    for (r, c), values in cells.items():
        canvas[r * ps:(r + 1) * ps, c * ps:(c + 1) * ps] = values
    return canvas[:grid.scene_h, :grid.scene_w]
