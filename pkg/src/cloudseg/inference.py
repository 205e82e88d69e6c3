"""Scene prediction: tile, downsample, forward, binarize, upsample, stitch.

A scene is cut into non-overlapping 384x384 patches (zero padded at the
ragged edges), each patch is resized to the 192x192 network resolution,
the sigmoid output is binarized at the fixed 0.047 threshold, the binary
patch is resized back to 384x384, and the patches are reassembled and
cropped to the original footprint.  Thresholding is strict: a probability
exactly equal to the threshold maps to the non-cloud class.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tiling
from .errors import ConfigError, DomainError
from .model import CloudSegNet, forward
from .raster_io import SpectralScene, write_raster

DEFAULT_THRESHOLD = 0.047


@dataclass(frozen=True)
class InferenceConfig:
    threshold: float = DEFAULT_THRESHOLD
    patch_size: int = tiling.PATCH_SIZE
    model_input_side: int = tiling.MODEL_INPUT_SIDE
    batch_size: int = 8
    emit_probabilities: bool = False

    def __post_init__(self):
        if not 0.0 <= self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in [0, 1), got {self.threshold}")
        if self.patch_size < 1 or self.model_input_side < 1 or self.batch_size < 1:
            raise ConfigError("patch_size, model_input_side and batch_size must be >= 1")


@dataclass
class ScenePrediction:
    scene_id: str
    mask: np.ndarray                 # (H, W) uint8 in {0, 1}
    probabilities: np.ndarray | None = None  # (H, W) float32, network-resampled


def binarize(probabilities: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Strictly-greater-than thresholding to a {0, 1} uint8 map."""
    probabilities = np.asarray(probabilities)
    if probabilities.size and (probabilities.min() < 0.0 or probabilities.max() > 1.0):
        raise DomainError("probabilities must lie in [0, 1]")
    return (probabilities > threshold).astype(np.uint8)


def _check_network(net: CloudSegNet, config: InferenceConfig):
    if net.config.input_side != config.model_input_side:
        raise ConfigError(
            f"network expects {net.config.input_side}px inputs, "
            f"inference is configured for {config.model_input_side}px")


def predict_patch_probabilities(net: CloudSegNet, patch: np.ndarray,
                                config: InferenceConfig = InferenceConfig()) -> np.ndarray:
    """Probability map for one patch, resampled back to the patch side.

    ``patch`` is (S, S, 4), either raw uint16 or already unit-interval float.
    """
    _check_network(net, config)
    patch = np.asarray(patch)
    if patch.dtype == np.uint16:
        patch = tiling.normalize_array(patch)
    patch = patch.astype(np.float32, copy=False)
    small = tiling.resize_array(patch, config.model_input_side, tiling.BILINEAR)
    probs = forward(net, small[None, ...])[0, :, :, 0]
    return tiling.resize_array(probs, patch.shape[0], tiling.BILINEAR)


def predict_patch(net: CloudSegNet, patch: np.ndarray,
                  config: InferenceConfig = InferenceConfig()) -> np.ndarray:
    """Binary {0, 1} mask for one patch, thresholded at network resolution."""
    _check_network(net, config)
    patch = np.asarray(patch)
    if patch.dtype == np.uint16:
        patch = tiling.normalize_array(patch)
    patch = patch.astype(np.float32, copy=False)
    side = patch.shape[0]
    small = tiling.resize_array(patch, config.model_input_side, tiling.BILINEAR)
    probs = forward(net, small[None, ...])[0, :, :, 0]
    binary = binarize(probs, config.threshold)
    return tiling.resize_array(binary, side, tiling.NEAREST)


def predict_scene(net: CloudSegNet, scene: SpectralScene,
                  config: InferenceConfig = InferenceConfig()) -> ScenePrediction:
    """Full-scene mask via the patch pipeline described in the module docstring."""
    _check_network(net, config)
    grid, patches = tiling.cut_patches(scene, patch_size=config.patch_size)
    small = np.stack([
        tiling.resize_array(tiling.normalize_array(p.pixels),
                            config.model_input_side, tiling.BILINEAR)
        for p in patches
    ])

    prob_maps = np.empty((len(patches), config.model_input_side,
                          config.model_input_side), dtype=np.float32)
    for start in range(0, small.shape[0], config.batch_size):
        batch = small[start:start + config.batch_size]
        prob_maps[start:start + batch.shape[0]] = forward(net, batch)[..., 0]

    mask_patches = []
    prob_patches = []
    for patch, probs in zip(patches, prob_maps):
        binary = binarize(probs, config.threshold)
        full = tiling.resize_array(binary, config.patch_size, tiling.NEAREST)
        mask_patches.append(tiling.MaskPatch(
            patch.grid_row, patch.grid_col, full, kind=tiling.BINARY))
        if config.emit_probabilities:
            grown = tiling.resize_array(probs, config.patch_size, tiling.BILINEAR)
            prob_patches.append(tiling.MaskPatch(
                patch.grid_row, patch.grid_col,
                np.clip(grown, 0.0, 1.0).astype(np.float32),
                kind=tiling.PROBABILITY))

    mask = tiling.stitch(grid, mask_patches).astype(np.uint8)
    probabilities = None
    if config.emit_probabilities:
        probabilities = tiling.stitch(grid, prob_patches).astype(np.float32)
    return ScenePrediction(scene_id=scene.scene_id, mask=mask,
                           probabilities=probabilities)


def mask_filename(scene_id: str) -> str:
    return f"{scene_id}_mask.TIF"


def probability_filename(scene_id: str) -> str:
    return f"{scene_id}_prob.TIF"


def write_prediction(prediction: ScenePrediction, out_dir) -> Path:
    """Write the 8-bit {0, 255} mask (and the float map when present)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask_path = out_dir / mask_filename(prediction.scene_id)
    write_raster(mask_path, (prediction.mask * 255).astype(np.uint8))
    if prediction.probabilities is not None:
        write_raster(out_dir / probability_filename(prediction.scene_id),
                     prediction.probabilities)
    return mask_path
