"""Run configuration: one YAML file describing paths and all module settings.

Example:

    paths:
      data_root: /data/scenes        # raw scenes or prepared patch tree
      output_dir: runs/demo
      checkpoint: runs/demo/best.npz # optional; defaults into output_dir
    network:
      input_side: 192
      depth_schedule: [16, 32, 64, 128, 256]
      bottleneck_depth: 512
    train:
      seed: 7                        # required: runs must be reproducible
      initial_lr: 1.0e-4
      max_epochs: 100
    augment:
      flip_probability: 0.5
      zoom_range: [1.0, 1.2]
    inference:
      threshold: 0.047
      batch_size: 8

The ``CLOUDSEG_DATA_ROOT`` environment variable overrides ``paths.data_root``;
everything else comes from the file (plus explicit CLI flags).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .augment import AugmentationPolicy
from .errors import ConfigError
from .inference import InferenceConfig
from .model import NetworkConfig
from .trainer import TrainConfig

DATA_ROOT_ENV = "CLOUDSEG_DATA_ROOT"


@dataclass
class PathsConfig:
    data_root: Path
    output_dir: Path
    checkpoint: Path | None = None

    def resolved_checkpoint(self) -> Path:
        return self.checkpoint if self.checkpoint is not None \
            else self.output_dir / "checkpoint.npz"


@dataclass
class RunConfig:
    paths: PathsConfig
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    inference: InferenceConfig = field(default_factory=InferenceConfig)


def _section(data: dict, name: str, allowed) -> dict:
    section = data.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return section


def _build(cls, section: dict, **forced):
    try:
        return cls(**{**section, **forced})
    except TypeError as exc:
        raise ConfigError(f"bad value for {cls.__name__}: {exc}") from exc


def load_run_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    unknown = set(data) - {"paths", "network", "train", "augment", "inference"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    paths_raw = _section(data, "paths", ("data_root", "output_dir", "checkpoint"))
    data_root = os.environ.get(DATA_ROOT_ENV) or paths_raw.get("data_root")
    if data_root is None:
        raise ConfigError(
            f"paths.data_root is required (or set {DATA_ROOT_ENV} in the environment)")
    if "output_dir" not in paths_raw:
        raise ConfigError("paths.output_dir is required")
    checkpoint = paths_raw.get("checkpoint")
    paths = PathsConfig(data_root=Path(data_root),
                        output_dir=Path(paths_raw["output_dir"]),
                        checkpoint=Path(checkpoint) if checkpoint else None)

    net_raw = _section(data, "network", ("input_side", "input_channels",
                                         "depth_schedule", "bottleneck_depth",
                                         "kernel_size", "output_channels"))
    if "depth_schedule" in net_raw:
        net_raw = {**net_raw, "depth_schedule": tuple(net_raw["depth_schedule"])}
    network = _build(NetworkConfig, net_raw)

    train_raw = _section(data, "train", (
        "seed", "initial_lr", "decay_rate", "patience", "lr_floor", "max_epochs",
        "batch_size", "beta1", "beta2", "adam_epsilon", "improvement_tol",
        "holdout_fraction", "weight_init"))
    if "seed" not in train_raw:
        raise ConfigError("train.seed is required: runs must be reproducible")
    train = _build(TrainConfig, train_raw)

    aug_raw = _section(data, "augment", ("enabled", "flip_probability",
                                         "rotation_choices", "zoom_range", "seed"))
    enabled = aug_raw.pop("enabled", True)
    if not enabled:
        augment = AugmentationPolicy.identity(seed=train.seed)
    else:
        aug_raw.setdefault("seed", train.seed)
        if "zoom_range" in aug_raw:
            aug_raw = {**aug_raw, "zoom_range": tuple(aug_raw["zoom_range"])}
        if "rotation_choices" in aug_raw:
            aug_raw = {**aug_raw, "rotation_choices": tuple(aug_raw["rotation_choices"])}
        augment = _build(AugmentationPolicy, aug_raw)

    inf_raw = _section(data, "inference", ("threshold", "patch_size", "batch_size",
                                           "emit_probabilities"))
    inference = _build(InferenceConfig, inf_raw,
                       model_input_side=network.input_side)

    return RunConfig(paths=paths, network=network, train=train,
                     augment=augment, inference=inference)
