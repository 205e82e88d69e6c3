"""Scikit-learn style estimator wrapping the network, trainer and inference."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import tiling
from .augment import AugmentationPolicy
from .evaluation import confusion
from .inference import InferenceConfig, ScenePrediction, binarize, predict_scene
from .model import DEFAULT_BOTTLENECK, DEFAULT_DEPTHS, HE_UNIFORM, NetworkConfig, forward
from .raster_io import SpectralScene
from .trainer import TrainConfig, fit_arrays
from .validation import as_mask_batch, as_patch_batch


class CloudSegmenter(BaseEstimator):
    """Patch-level cloud segmenter with a fit/predict interface.

    ``fit`` takes a batch of (S, S, 4) reflectance patches and binary
    masks; ``predict`` returns binary masks at the input resolution, and
    ``predict_scene`` runs the full tile-and-stitch pipeline on a raw
    scene.  All parameters are stored verbatim (scikit-learn convention)
    and only validated when used.
    """

    def __init__(self, depth_schedule=DEFAULT_DEPTHS,
                 bottleneck_depth=DEFAULT_BOTTLENECK, input_side=192,
                 initial_lr=1e-4, decay_rate=0.7, patience=15, lr_floor=1e-9,
                 max_epochs=100, batch_size=16, threshold=0.047,
                 augment=True, flip_probability=0.5, zoom_range=(1.0, 1.2),
                 weight_init=HE_UNIFORM, holdout_fraction=0.0,
                 patch_size=tiling.PATCH_SIZE, seed=0, verbose=False):
        self.depth_schedule = depth_schedule
        self.bottleneck_depth = bottleneck_depth
        self.input_side = input_side
        self.initial_lr = initial_lr
        self.decay_rate = decay_rate
        self.patience = patience
        self.lr_floor = lr_floor
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.threshold = threshold
        self.augment = augment
        self.flip_probability = flip_probability
        self.zoom_range = zoom_range
        self.weight_init = weight_init
        self.holdout_fraction = holdout_fraction
        self.patch_size = patch_size
        self.seed = seed
        self.verbose = verbose

    def _network_config(self) -> NetworkConfig:
        return NetworkConfig(input_side=self.input_side,
                             depth_schedule=tuple(self.depth_schedule),
                             bottleneck_depth=self.bottleneck_depth)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(initial_lr=self.initial_lr, decay_rate=self.decay_rate,
                           patience=self.patience, lr_floor=self.lr_floor,
                           max_epochs=self.max_epochs, batch_size=self.batch_size,
                           seed=self.seed, holdout_fraction=self.holdout_fraction,
                           weight_init=self.weight_init)

    def _policy(self) -> AugmentationPolicy:
        if not self.augment:
            return AugmentationPolicy.identity(seed=self.seed)
        return AugmentationPolicy(flip_probability=self.flip_probability,
                                  zoom_range=tuple(self.zoom_range), seed=self.seed)

    def fit(self, X, y, checkpoint_path=None):
        X = as_patch_batch(X)
        y = as_mask_batch(y, X)
        log = print if self.verbose else None
        net, history, state = fit_arrays(X, y, self._network_config(),
                                         self._train_config(), self._policy(),
                                         checkpoint_path=checkpoint_path, log=log)
        self.network_ = net
        self.history_ = history
        self.state_ = state
        return self

    def _require_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("CloudSegmenter must be fitted before predicting")

    def predict_proba(self, X) -> np.ndarray:
        """Per-pixel cloud probabilities, (N, S, S) float32 at input size."""
        self._require_fitted()
        X = as_patch_batch(X)
        side = X.shape[1]
        if side != self.input_side:
            X = np.stack([tiling.resize_array(x, self.input_side, tiling.BILINEAR)
                          for x in X])
        probs = forward(self.network_, X)[..., 0]
        if side != self.input_side:
            probs = np.stack([tiling.resize_array(p, side, tiling.BILINEAR)
                              for p in probs])
            probs = np.clip(probs, 0.0, 1.0)
        return probs.astype(np.float32)

    def predict(self, X) -> np.ndarray:
        """Binary {0, 1} masks, (N, S, S) uint8, thresholded at net resolution."""
        self._require_fitted()
        X = as_patch_batch(X)
        side = X.shape[1]
        resized = X
        if side != self.input_side:
            resized = np.stack([tiling.resize_array(x, self.input_side, tiling.BILINEAR)
                                for x in X])
        probs = forward(self.network_, resized)[..., 0]
        masks = binarize(probs, self.threshold)
        if side != self.input_side:
            masks = np.stack([tiling.resize_array(m, side, tiling.NEAREST)
                              for m in masks])
        return masks.astype(np.uint8)

    def score(self, X, y) -> float:
        """Pooled Jaccard index over the batch (1.0 when both are cloud-free)."""
        self._require_fitted()
        X = as_patch_batch(X)
        y = as_mask_batch(y, X)
        counts = confusion(self.predict(X), y)
        denom = counts.tp + counts.fn + counts.fp
        return 1.0 if denom == 0 else counts.tp / denom

    def predict_scene(self, scene: SpectralScene,
                      emit_probabilities: bool = False) -> ScenePrediction:
        self._require_fitted()
        config = InferenceConfig(threshold=self.threshold,
                                 patch_size=self.patch_size,
                                 model_input_side=self.input_side,
                                 emit_probabilities=emit_probabilities)
        return predict_scene(self.network_, scene, config)
