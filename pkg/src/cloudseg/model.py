"""Encoder-decoder segmentation network with shortcut convolution blocks.

The contracting arm stacks shortcut blocks (two 3x3 convolutions whose
output is added to a channel-tiled copy of the block input) separated by
2x2 max-pooling; the expanding arm mirrors it with stride-2 transposed
convolutions, cross-arm concatenation, and the same additive shortcut from
the upsampled features.  A 1x1 convolution plus sigmoid produces a
per-pixel cloud probability at the input resolution.

All convolutions use same-padding, which the additive shortcuts and the
"output size equals input size" contract both require.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import CheckpointMismatch, ConfigError, DepthError, ShapeMismatch

UNIT_UNIFORM = "unit_uniform"
HE_UNIFORM = "he_uniform"
GLOROT_UNIFORM = "glorot_uniform"

DEFAULT_DEPTHS = (16, 32, 64, 128, 256)
DEFAULT_BOTTLENECK = 512

_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters; every parameter shape follows from these."""

    input_side: int = 192
    input_channels: int = 4
    depth_schedule: tuple = DEFAULT_DEPTHS
    bottleneck_depth: int = DEFAULT_BOTTLENECK
    kernel_size: int = 3
    output_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "depth_schedule", tuple(int(d) for d in self.depth_schedule))
        self.validate()

    def validate(self):
        depths = self.depth_schedule
        if not depths:
            raise ConfigError("depth_schedule must contain at least one level")
        if min(self.input_side, self.input_channels, self.output_channels) < 1:
            raise ConfigError("sides and channel counts must be positive")
        if depths[0] % self.input_channels:
            raise ConfigError(
                f"first depth {depths[0]} must be a multiple of "
                f"input_channels {self.input_channels} for the Copy+Concat shortcut")
        for prev, cur in zip(depths, depths[1:]):
            if cur != 2 * prev:
                raise ConfigError(f"depth schedule must double each level: {prev} -> {cur}")
        if self.bottleneck_depth != 2 * depths[-1]:
            raise ConfigError(
                f"bottleneck_depth must be twice the last level depth "
                f"({2 * depths[-1]}), got {self.bottleneck_depth}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.input_side % (2 ** len(depths)):
            raise ConfigError(
                f"input_side {self.input_side} must be divisible by "
                f"2^{len(depths)} so every pooling halves cleanly")

    @property
    def levels(self) -> int:
        return len(self.depth_schedule)


class ShortcutConvBlock(nn.Module):
    """Two same-padded convolutions with a Copy/Concat + Addition shortcut.

    The block input is concatenated with copies of itself until its depth
    matches the convolution output, then added elementwise; ReLU follows
    each convolution and the addition.
    """

    def __init__(self, in_depth: int, out_depth: int, kernel_size: int = 3):
        super().__init__()
        if out_depth % in_depth:
            raise DepthError(
                f"block output depth {out_depth} is not a multiple of input depth {in_depth}")
        pad = kernel_size // 2
        self.conv1 = nn.Conv2d(in_depth, out_depth, kernel_size, padding=pad)
        self.conv2 = nn.Conv2d(out_depth, out_depth, kernel_size, padding=pad)
        self.copies = out_depth // in_depth

    def forward(self, x):
        h = F.relu(self.conv1(x))
        h = F.relu(self.conv2(h))
        shortcut = x.repeat(1, self.copies, 1, 1)
        return F.relu(h + shortcut)


class ContractingBlock(nn.Module):
    """A shortcut block followed by 2x2 stride-2 max-pooling.

    Returns (features, pooled); the features feed the cross-arm skip
    connection, the pooled map feeds the next level.
    """

    def __init__(self, in_depth: int, out_depth: int, kernel_size: int = 3):
        super().__init__()
        self.block = ShortcutConvBlock(in_depth, out_depth, kernel_size)

    def forward(self, x):
        features = self.block(x)
        return features, F.max_pool2d(features, kernel_size=2, stride=2)


class ExpandingBlock(nn.Module):
    """Upsample, fuse the mirror-level skip, and add the upsampled shortcut.

    The input from below is upsampled by a 2x2 stride-2 transposed
    convolution that halves its depth, concatenated with the skip features,
    reduced back to the skip depth by two convolutions, and finally added
    to the upsampled features before the closing ReLU.
    """

    def __init__(self, below_depth: int, kernel_size: int = 3):
        super().__init__()
        if below_depth % 2:
            raise DepthError(f"below depth {below_depth} must be even")
        skip_depth = below_depth // 2
        pad = kernel_size // 2
        self.up = nn.ConvTranspose2d(below_depth, skip_depth, kernel_size=2, stride=2)
        self.conv1 = nn.Conv2d(2 * skip_depth, skip_depth, kernel_size, padding=pad)
        self.conv2 = nn.Conv2d(skip_depth, skip_depth, kernel_size, padding=pad)
        self.skip_depth = skip_depth

    def forward(self, below, skip):
        if skip.shape[1] * 2 != below.shape[1]:
            raise ShapeMismatch(
                f"skip depth {skip.shape[1]} must be half of below depth {below.shape[1]}")
        if skip.shape[2] != 2 * below.shape[2] or skip.shape[3] != 2 * below.shape[3]:
            raise ShapeMismatch(
                f"skip side {tuple(skip.shape[2:])} must be twice "
                f"below side {tuple(below.shape[2:])}")
        up = self.up(below)
        h = torch.cat([up, skip], dim=1)
        h = F.relu(self.conv1(h))
        h = F.relu(self.conv2(h))
        return F.relu(h + up)


class CloudSegNet(nn.Module):
    """The full network; tensors are NCHW internally."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        config.validate()
        self.config = config
        k = config.kernel_size

        depths = config.depth_schedule
        self.contracting = nn.ModuleList()
        in_depth = config.input_channels
        for depth in depths:
            self.contracting.append(ContractingBlock(in_depth, depth, k))
            in_depth = depth
        self.bottleneck = ShortcutConvBlock(depths[-1], config.bottleneck_depth, k)
        self.expanding = nn.ModuleList(
            ExpandingBlock(2 * depth, k) for depth in reversed(depths))
        self.head = nn.Conv2d(depths[0], config.output_channels, kernel_size=1)

    def forward(self, x):
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.input_channels \
                or x.shape[2] != cfg.input_side or x.shape[3] != cfg.input_side:
            raise ShapeMismatch(
                f"expected (B, {cfg.input_channels}, {cfg.input_side}, {cfg.input_side}), "
                f"got {tuple(x.shape)}")
        skips = []
        h = x
        for block in self.contracting:
            features, h = block(h)
            skips.append(features)
        h = self.bottleneck(h)
        for block, skip in zip(self.expanding, reversed(skips)):
            h = block(h, skip)
        logits = self.head(h)
        probs = torch.sigmoid(logits)
        # The contract promises values strictly inside (0, 1); sigmoid saturates
        # to exact 0/1 in floating point, so pin to the open interval.
        info = torch.finfo(probs.dtype)
        return torch.clamp(probs, min=info.tiny, max=1.0 - info.eps)

    @property
    def dtype(self):
        return next(self.parameters()).dtype


def _fan_in(name: str, shape) -> int:
    if name.endswith("bias") or len(shape) < 2:
        return int(shape[0])
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    return int(shape[1]) * receptive


def _init_array(init, name: str, shape, rng: np.random.Generator) -> np.ndarray:
    if callable(init):
        return np.asarray(init(name, tuple(shape), rng), dtype=np.float64)
    if init == UNIT_UNIFORM:
        return rng.uniform(-1.0, 1.0, size=shape)
    if name.endswith("bias"):
        return np.zeros(shape)
    if init == HE_UNIFORM:
        bound = np.sqrt(6.0 / _fan_in(name, shape))
    elif init == GLOROT_UNIFORM:
        fan_out = int(shape[0]) * (int(np.prod(shape[2:])) if len(shape) > 2 else 1)
        bound = np.sqrt(6.0 / (_fan_in(name, shape) + fan_out))
    else:
        raise ConfigError(f"unknown weight init {init!r}")
    return rng.uniform(-bound, bound, size=shape)


def build_network(config: NetworkConfig, init=UNIT_UNIFORM, seed: int = 0,
                  dtype=torch.float32) -> CloudSegNet:
    """Construct the network and draw its parameters.

    ``init`` is ``"unit_uniform"`` (every parameter i.i.d. uniform on
    [-1, 1]), ``"he_uniform"``, ``"glorot_uniform"``, or a callable
    ``(name, shape, rng) -> array``.  Builds are bit-identical for a fixed
    seed: all draws come from one numpy generator walked over the
    parameters in a fixed order.
    """
    net = CloudSegNet(config)
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, param in net.named_parameters():
            values = _init_array(init, name, param.shape, rng)
            param.copy_(torch.from_numpy(np.ascontiguousarray(values)))
    return net.to(dtype)


def forward(network: CloudSegNet, batch) -> np.ndarray:
    """Run a channels-last (B, S, S, 4) batch through the network.

    Returns a (B, S, S, 1) probability array with every value in (0, 1).
    """
    batch = np.asarray(batch)
    cfg = network.config
    if batch.ndim != 4 or batch.shape[3] != cfg.input_channels:
        raise ShapeMismatch(
            f"expected (B, S, S, {cfg.input_channels}) batch, got {batch.shape}")
    x = torch.from_numpy(np.ascontiguousarray(batch)).to(network.dtype)
    x = x.permute(0, 3, 1, 2)
    with torch.no_grad():
        probs = network(x)
    return probs.permute(0, 2, 3, 1).cpu().numpy()


def count_parameters(network: nn.Module) -> int:
    return sum(p.numel() for p in network.parameters())


def save_checkpoint(network: CloudSegNet, path, optimizer_state=None, extra=None) -> Path:
    """Persist weights keyed by layer name with the config embedded."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{name}": p.detach().cpu().numpy()
              for name, p in network.named_parameters()}
    if optimizer_state is not None:
        for name, m in optimizer_state["m"].items():
            arrays[f"adam/m/{name}"] = np.asarray(m)
        for name, v in optimizer_state["v"].items():
            arrays[f"adam/v/{name}"] = np.asarray(v)
        arrays["adam/step"] = np.asarray(optimizer_state["step"], dtype=np.int64)
    meta = {
        "version": _CHECKPOINT_VERSION,
        "config": asdict(network.config),
        "dtype": str(network.dtype).replace("torch.", ""),
        "extra": extra or {},
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez_compressed(path, **arrays)
    return path


def load_checkpoint(path, expected_config: NetworkConfig | None = None,
                    dtype=None):
    """Rebuild a network from a checkpoint.

    Returns ``(network, info)`` where ``info`` carries the optimizer state
    (if stored) and any saved extras.  Raises CheckpointMismatch when
    ``expected_config`` differs from the embedded one or shapes disagree.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointMismatch(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        stored = dict(meta["config"])
        stored["depth_schedule"] = tuple(stored["depth_schedule"])
        config = NetworkConfig(**stored)
        if expected_config is not None and config != expected_config:
            raise CheckpointMismatch(
                f"checkpoint config {config} does not match requested {expected_config}")
        if dtype is None:
            dtype = getattr(torch, meta.get("dtype", "float32"))
        net = CloudSegNet(config).to(dtype)
        named = dict(net.named_parameters())
        with torch.no_grad():
            for name, param in named.items():
                key = f"param/{name}"
                if key not in data:
                    raise CheckpointMismatch(f"checkpoint lacks parameter {name!r}")
                stored_arr = data[key]
                if tuple(stored_arr.shape) != tuple(param.shape):
                    raise CheckpointMismatch(
                        f"parameter {name!r} shape {stored_arr.shape} != {tuple(param.shape)}")
                param.copy_(torch.from_numpy(stored_arr).to(dtype))
        info = {"extra": meta.get("extra", {}), "optimizer_state": None}
        if "adam/step" in data:
            info["optimizer_state"] = {
                "m": {n: data[f"adam/m/{n}"] for n in named},
                "v": {n: data[f"adam/v/{n}"] for n in named},
                "step": int(data["adam/step"]),
            }
    return net, info
