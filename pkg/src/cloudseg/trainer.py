"""Training loop: per-epoch augmentation, Adam updates, plateau LR decay.

The learning rate starts at 1e-4 and is multiplied by 0.7 whenever the
monitored loss has not improved for 15 consecutive epochs, clamped at 1e-9.
The monitored quantity is the training-epoch mean loss (optionally a
held-out fraction); the best-so-far parameters are checkpointed together
with a frozen-weights evaluation loss so a reload can be verified exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import model as model_mod
from . import tiling
from .augment import AugmentationPolicy, augment_arrays, sample_transform
from .errors import (
    ConfigError,
    EmptyDataset,
    NonFiniteGradient,
    NonFiniteLoss,
    ShapeMismatch,
)
from .loss import soft_jaccard_loss_torch
from .model import CloudSegNet, NetworkConfig, build_network
from .raster_io import DatasetManifest, load_gt, load_scene


@dataclass
class TrainConfig:
    initial_lr: float = 1e-4
    decay_rate: float = 0.7
    patience: int = 15
    lr_floor: float = 1e-9
    max_epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    improvement_tol: float = 1e-8
    holdout_fraction: float = 0.0
    weight_init: str = model_mod.HE_UNIFORM

    def __post_init__(self):
        if not 0.0 < self.decay_rate < 1.0:
            raise ConfigError(f"decay_rate must be in (0, 1), got {self.decay_rate}")
        if self.lr_floor >= self.initial_lr:
            raise ConfigError("lr_floor must be below initial_lr")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.max_epochs < 0 or self.batch_size < 1:
            raise ConfigError("max_epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in [0, 1)")


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter mapping."""

    m: dict
    v: dict
    step: int = 0

    @classmethod
    def initial(cls, params: dict) -> "AdamState":
        return cls(m={k: p * 0.0 for k, p in params.items()},
                   v={k: p * 0.0 for k, p in params.items()}, step=0)


def _all_finite(x) -> bool:
    if isinstance(x, torch.Tensor):
        return bool(torch.isfinite(x).all())
    return bool(np.isfinite(x).all())


def adam_update(params: dict, grads: dict, state: AdamState, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
    """One bias-corrected Adam step; works on numpy arrays or torch tensors.

    Returns ``(new_params, new_state)`` without mutating the inputs.
    """
    if set(params) != set(grads):
        raise ShapeMismatch(f"parameter/gradient keys differ: "
                            f"{sorted(set(params) ^ set(grads))[:3]}")
    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    for name, p in params.items():
        g = grads[name]
        if tuple(np.shape(g)) != tuple(np.shape(p)):
            raise ShapeMismatch(
                f"gradient for {name!r} has shape {np.shape(g)}, expected {np.shape(p)}")
        if not _all_finite(g):
            raise NonFiniteGradient(f"non-finite gradient in {name!r}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        new_params[name] = p - lr * m_hat / (v_hat ** 0.5 + epsilon)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, step=step)


@dataclass
class HistoryRecord:
    epoch: int
    loss: float
    lr: float


@dataclass
class TrainState:
    """Everything the loop mutates: schedule position, optimizer, history."""

    config: TrainConfig
    current_lr: float
    adam: AdamState | None = None
    best_monitored_value: float = math.inf
    epochs_since_improvement: int = 0
    epoch: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def initial(cls, config: TrainConfig) -> "TrainState":
        return cls(config=config, current_lr=config.initial_lr)


def lr_step(state: TrainState, monitored_value: float) -> TrainState:
    """Advance the reduce-on-plateau schedule by one epoch observation."""
    cfg = state.config
    if monitored_value < state.best_monitored_value - cfg.improvement_tol:
        state.best_monitored_value = monitored_value
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
        if state.epochs_since_improvement >= cfg.patience:
            state.current_lr = max(state.current_lr * cfg.decay_rate, cfg.lr_floor)
            state.epochs_since_improvement = 0
    return state


def write_history_csv(history, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("epoch,loss,lr\n")
        for rec in history:
            fh.write(f"{rec.epoch},{rec.loss!r},{rec.lr!r}\n")
    return path


def read_history_csv(path):
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "epoch,loss,lr":
            raise ConfigError(f"bad history header {header!r} in {path}")
        for line in fh:
            epoch, loss, lr = line.strip().split(",")
            records.append(HistoryRecord(int(epoch), float(loss), float(lr)))
    return records


def _as_model_resolution(patches: np.ndarray, masks: np.ndarray, side: int):
    if patches.shape[1] == side:
        return patches, masks
    xs = np.stack([tiling.resize_array(p, side, tiling.BILINEAR) for p in patches])
    ys = np.stack([tiling.resize_array(m, side, tiling.NEAREST) for m in masks])
    return xs, ys


def _eval_loss(net: CloudSegNet, xs: torch.Tensor, ts: torch.Tensor,
               batch_size: int) -> float:
    losses, weights = [], []
    with torch.no_grad():
        for start in range(0, xs.shape[0], batch_size):
            xb = xs[start:start + batch_size]
            tb = ts[start:start + batch_size]
            losses.append(float(soft_jaccard_loss_torch(tb, net(xb))))
            weights.append(xb.shape[0])
    return float(np.average(losses, weights=weights))


def evaluate_loss(net: CloudSegNet, patches: np.ndarray, masks: np.ndarray,
                  batch_size: int = 16) -> float:
    """Mean loss of frozen weights over un-augmented data in natural order."""
    patches = np.asarray(patches, dtype=np.float32)
    masks = np.asarray(masks)
    xs, ys = _as_model_resolution(patches, masks, net.config.input_side)
    x = torch.from_numpy(xs).permute(0, 3, 1, 2).contiguous().to(net.dtype)
    t = torch.from_numpy(ys.astype(np.float32)).unsqueeze(1).to(net.dtype)
    return _eval_loss(net, x, t, batch_size)


def fit_arrays(patches: np.ndarray, masks: np.ndarray, net_config: NetworkConfig,
               cfg: TrainConfig, policy: AugmentationPolicy | None = None,
               checkpoint_path=None, log=None, initial_network: CloudSegNet | None = None,
               initial_optimizer: dict | None = None):
    """Train on in-memory data; returns ``(network, history, state)``.

    ``patches`` is (N, S, S, 4) unit-interval float, ``masks`` is (N, S, S)
    binary.  Inputs are resampled to the network resolution once up front;
    augmentation is re-drawn before every epoch.  Passing ``initial_network``
    (and optionally its saved optimizer state) resumes from those weights
    instead of a fresh initialization.
    """
    patches = np.asarray(patches, dtype=np.float32)
    masks = np.asarray(masks)
    if patches.ndim != 4 or patches.shape[0] == 0:
        raise EmptyDataset("training requires at least one (patch, mask) sample")
    if masks.shape != patches.shape[:3]:
        raise ShapeMismatch(f"masks {masks.shape} do not pair with patches {patches.shape}")
    if policy is None:
        policy = AugmentationPolicy.identity(seed=cfg.seed)

    xs, ys = _as_model_resolution(patches, masks, net_config.input_side)
    if initial_network is not None:
        net = initial_network
    else:
        net = build_network(net_config, init=cfg.weight_init, seed=cfg.seed)
    state = TrainState.initial(cfg)
    params = dict(net.named_parameters())
    if initial_optimizer is not None:
        dtype = net.dtype
        state.adam = AdamState(
            m={k: torch.as_tensor(v, dtype=dtype)
               for k, v in initial_optimizer["m"].items()},
            v={k: torch.as_tensor(v, dtype=dtype)
               for k, v in initial_optimizer["v"].items()},
            step=int(initial_optimizer["step"]))
    else:
        state.adam = AdamState.initial({k: p.detach() for k, p in params.items()})

    n = xs.shape[0]
    split_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5011d]))
    holdout_idx = np.array([], dtype=int)
    train_idx = np.arange(n)
    if cfg.holdout_fraction > 0.0:
        n_hold = int(round(cfg.holdout_fraction * n))
        if 0 < n_hold < n:
            perm = split_rng.permutation(n)
            holdout_idx, train_idx = perm[:n_hold], perm[n_hold:]

    x_hold = torch.from_numpy(xs[holdout_idx]).permute(0, 3, 1, 2).contiguous()
    t_hold = torch.from_numpy(ys[holdout_idx].astype(np.float32)).unsqueeze(1)
    # Un-augmented data in natural order: checkpoints record a frozen-weights
    # loss over this so a reload can reproduce the number exactly.
    x_canon = torch.from_numpy(xs[train_idx]).permute(0, 3, 1, 2).contiguous()
    t_canon = torch.from_numpy(ys[train_idx].astype(np.float32)).unsqueeze(1)

    for epoch in range(1, cfg.max_epochs + 1):
        state.epoch = epoch
        epoch_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        order = epoch_rng.permutation(train_idx)

        aug_x = np.empty((order.size,) + xs.shape[1:], dtype=np.float32)
        aug_t = np.empty((order.size,) + ys.shape[1:], dtype=np.float32)
        for slot, i in enumerate(order):
            transform = sample_transform(policy, epoch_rng)
            px, mx = augment_arrays(xs[i], ys[i], transform)
            aug_x[slot] = px
            aug_t[slot] = mx

        x_epoch = torch.from_numpy(aug_x).permute(0, 3, 1, 2).contiguous()
        t_epoch = torch.from_numpy(aug_t).unsqueeze(1)

        lr_used = state.current_lr
        batch_losses, batch_sizes = [], []
        for start in range(0, order.size, cfg.batch_size):
            xb = x_epoch[start:start + cfg.batch_size]
            tb = t_epoch[start:start + cfg.batch_size]
            net.zero_grad(set_to_none=True)
            loss = soft_jaccard_loss_torch(tb, net(xb))
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                exc = NonFiniteLoss(
                    f"loss became {loss_value} at epoch {epoch}, batch offset {start}")
                exc.state = state
                raise exc
            loss.backward()
            grads = {k: p.grad.detach() for k, p in params.items()}
            detached = {k: p.detach() for k, p in params.items()}
            new_values, state.adam = adam_update(
                detached, grads, state.adam, lr_used,
                beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.adam_epsilon)
            with torch.no_grad():
                for k, p in params.items():
                    p.copy_(new_values[k])
            batch_losses.append(loss_value)
            batch_sizes.append(xb.shape[0])

        epoch_loss = float(np.average(batch_losses, weights=batch_sizes))
        if holdout_idx.size:
            monitored = _eval_loss(net, x_hold, t_hold, cfg.batch_size)
        else:
            monitored = epoch_loss
        state.history.append(HistoryRecord(epoch, epoch_loss, lr_used))
        if log is not None:
            log(f"epoch {epoch}: loss {epoch_loss:.6f} lr {lr_used:.3e}")

        improved = monitored < state.best_monitored_value - cfg.improvement_tol
        lr_step(state, monitored)
        if improved and checkpoint_path is not None:
            x_mon = x_hold if holdout_idx.size else x_canon
            t_mon = t_hold if holdout_idx.size else t_canon
            frozen = _eval_loss(net, x_mon, t_mon, cfg.batch_size)
            model_mod.save_checkpoint(
                net, checkpoint_path,
                optimizer_state={"m": {k: t.cpu().numpy() for k, t in state.adam.m.items()},
                                 "v": {k: t.cpu().numpy() for k, t in state.adam.v.items()},
                                 "step": state.adam.step},
                extra={"epoch": epoch, "monitored_loss": monitored,
                       "frozen_eval_loss": frozen})
    return net, state.history, state


def load_training_data(manifest: DatasetManifest):
    """Load every manifest entry as a normalized patch plus binary mask."""
    if not manifest.entries:
        raise EmptyDataset(f"manifest for split {manifest.split!r} has no entries")
    patches, masks = [], []
    for entry in manifest.entries:
        scene = load_scene(entry.band_paths, entry.scene_id)
        gt = load_gt(entry.gt_path, scene)
        patches.append(tiling.normalize_array(scene.bands))
        masks.append(gt.mask)
    return np.stack(patches), np.stack(masks)


def train(manifest: DatasetManifest, net_config: NetworkConfig, cfg: TrainConfig,
          policy: AugmentationPolicy | None = None, checkpoint_path=None, log=None,
          initial_network: CloudSegNet | None = None,
          initial_optimizer: dict | None = None):
    """Train from a dataset manifest; returns ``(network, history)``."""
    patches, masks = load_training_data(manifest)
    net, history, _ = fit_arrays(patches, masks, net_config, cfg, policy,
                                 checkpoint_path=checkpoint_path, log=log,
                                 initial_network=initial_network,
                                 initial_optimizer=initial_optimizer)
    return net, history
