"""Cloud segmentation toolkit for 4-band satellite scenes.

Tile scenes into patches, train an encoder-decoder network with shortcut
connections under a soft Jaccard loss, stitch per-patch predictions back
into scene-level binary cloud masks, and score them.
"""

from .augment import AugmentationPolicy, GeometricTransform, apply_transform, sample_transform
from .errors import (
    CheckpointMismatch,
    CloudSegError,
    ConfigError,
    DataError,
    DomainError,
    EmptyDataset,
    NonBinaryInput,
    ShapeMismatch,
)
from .estimator import CloudSegmenter
from .evaluation import (
    ConfusionCounts,
    MetricsReport,
    confusion,
    evaluate_testset,
    metrics,
    render_row,
    render_table,
)
from .inference import InferenceConfig, ScenePrediction, binarize, predict_scene
from .loss import soft_jaccard_gradient, soft_jaccard_loss
from .model import (
    CloudSegNet,
    NetworkConfig,
    build_network,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .raster_io import (
    BAND_ORDER,
    DatasetManifest,
    GroundTruthMask,
    SpectralScene,
    build_manifest,
    load_gt,
    load_scene,
    read_raster,
    write_raster,
)
from .tiling import (
    MODEL_INPUT_SIDE,
    PATCH_SIZE,
    MaskPatch,
    PatchGrid,
    SpectralPatch,
    cut_patches,
    normalize,
    resize_patch,
    stitch,
)
from .trainer import TrainConfig, TrainState, adam_update, lr_step, train

__version__ = "0.1.0"

__all__ = [
    "AugmentationPolicy",
    "BAND_ORDER",
    "CheckpointMismatch",
    "CloudSegError",
    "CloudSegNet",
    "CloudSegmenter",
    "ConfigError",
    "ConfusionCounts",
    "DataError",
    "DatasetManifest",
    "DomainError",
    "EmptyDataset",
    "GeometricTransform",
    "GroundTruthMask",
    "InferenceConfig",
    "MODEL_INPUT_SIDE",
    "MaskPatch",
    "MetricsReport",
    "NetworkConfig",
    "NonBinaryInput",
    "PATCH_SIZE",
    "PatchGrid",
    "ScenePrediction",
    "ShapeMismatch",
    "SpectralPatch",
    "SpectralScene",
    "TrainConfig",
    "TrainState",
    "adam_update",
    "apply_transform",
    "binarize",
    "build_manifest",
    "build_network",
    "confusion",
    "count_parameters",
    "cut_patches",
    "evaluate_testset",
    "load_checkpoint",
    "load_gt",
    "load_scene",
    "lr_step",
    "metrics",
    "normalize",
    "predict_scene",
    "read_raster",
    "render_row",
    "render_table",
    "resize_patch",
    "sample_transform",
    "save_checkpoint",
    "soft_jaccard_gradient",
    "soft_jaccard_loss",
    "stitch",
    "train",
    "write_raster",
]
