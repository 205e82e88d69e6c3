"""Command-line pipeline: ``prepare | train | predict | evaluate``.

All commands read one YAML run configuration (``--config``); a few flags
override individual values for convenience.  Exit codes: 0 success,
1 usage/configuration error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import tiling
from .config import RunConfig, load_run_config
from .errors import CloudSegError, ConfigError, DataError, EmptyDataset, LayoutError
from .evaluation import evaluate_testset, render_table, write_report_csv
from .inference import predict_scene, write_prediction
from .model import load_checkpoint, save_checkpoint
from .raster_io import (
    BAND_ORDER,
    GT_BAND,
    build_manifest,
    discover_raw_scenes,
    load_gt,
    load_scene,
    read_manifest_csv,
    write_manifest_csv,
    write_raster,
)
from .trainer import train, write_history_csv

PROG = "cloudseg"


def _patch_name(band: str, row: int, col: int, scene_id: str) -> str:
    return f"{band}_patch_{row}_{col}_{scene_id}.TIF"


def _cut_raw_split(data_root: Path, prepared_root: Path, split: str,
                   patch_size: int, out) -> None:
    scenes = discover_raw_scenes(data_root, split)
    if not scenes:
        raise EmptyDataset(f"no scene directories under {data_root / split}")
    for scene_id, band_paths, gt_path in scenes:
        scene = load_scene(band_paths, scene_id)
        _, patches = tiling.cut_patches(scene, patch_size=patch_size)
        for p in patches:
            for b, band in enumerate(BAND_ORDER):
                write_raster(prepared_root / split / band /
                             _patch_name(band, p.grid_row, p.grid_col, scene_id),
                             p.pixels[:, :, b])
        if gt_path is not None:
            gt = load_gt(gt_path, scene)
            _, mask_tiles = tiling.cut_mask(gt.mask, scene_id, patch_size=patch_size)
            for m in mask_tiles:
                write_raster(prepared_root / split / GT_BAND /
                             _patch_name(GT_BAND, m.grid_row, m.grid_col, scene_id),
                             (m.values * 255).astype(np.uint8))
        elif split == "train":
            raise LayoutError(f"train scene {scene_id!r} has no gt.TIF")
        print(f"cut {scene_id}: {len(patches)} patches", file=out)


def cmd_prepare(run: RunConfig, patch_size: int, out=None) -> int:
    """Cut raw scenes into patches (or index an existing patch tree)."""
    out = sys.stdout if out is None else out
    data_root = run.paths.data_root
    manifest_dir = run.paths.output_dir / "manifests"
    prepared = 0
    for split in ("train", "test"):
        try:
            manifest = build_manifest(data_root, split)
        except LayoutError:
            if not (data_root / split).is_dir():
                continue
            prepared_root = run.paths.output_dir / "prepared"
            _cut_raw_split(data_root, prepared_root, split, patch_size, out)
            manifest = build_manifest(prepared_root, split)
        write_manifest_csv(manifest, manifest_dir / f"{split}.csv")
        print(f"{split}: {manifest.patch_count} patches", file=out)
        prepared += 1
    if prepared == 0:
        raise LayoutError(f"no train/ or test/ split found under {data_root}")
    return 0


def _train_manifest(run: RunConfig):
    manifest_csv = run.paths.output_dir / "manifests" / "train.csv"
    if manifest_csv.is_file():
        return read_manifest_csv(manifest_csv, "train")
    for root in (run.paths.output_dir / "prepared", run.paths.data_root):
        try:
            return build_manifest(root, "train")
        except LayoutError:
            continue
    raise LayoutError(
        f"no prepared train data found; run '{PROG} prepare' first "
        f"(searched {manifest_csv} and {run.paths.data_root})")


def cmd_train(run: RunConfig, checkpoint_arg, out=None) -> int:
    """Fit the network, writing the best checkpoint and the history CSV."""
    out = sys.stdout if out is None else out
    manifest = _train_manifest(run)
    checkpoint_path = Path(checkpoint_arg) if checkpoint_arg \
        else run.paths.resolved_checkpoint()
    initial_network = None
    initial_optimizer = None
    if checkpoint_path.is_file():
        initial_network, meta = load_checkpoint(checkpoint_path,
                                                expected_config=run.network)
        initial_optimizer = meta.get("optimizer_state")
        print(f"resuming from {checkpoint_path}", file=out)

    net, history = train(manifest, run.network, run.train, run.augment,
                         checkpoint_path=checkpoint_path,
                         log=lambda msg: print(msg, file=out),
                         initial_network=initial_network,
                         initial_optimizer=initial_optimizer)
    if not checkpoint_path.is_file():
        save_checkpoint(net, checkpoint_path, extra={"epoch": len(history)})
    history_path = write_history_csv(history, run.paths.output_dir / "history.csv")
    print(f"checkpoint: {checkpoint_path}", file=out)
    print(f"history: {history_path} ({len(history)} epochs)", file=out)
    return 0


def cmd_predict(run: RunConfig, scene_ids, checkpoint_arg, emit_prob: bool,
                threshold, out=None) -> int:
    """Write one mask file per test scene from the raw scene directories."""
    out = sys.stdout if out is None else out
    checkpoint_path = Path(checkpoint_arg) if checkpoint_arg \
        else run.paths.resolved_checkpoint()
    net, _ = load_checkpoint(checkpoint_path, expected_config=run.network)

    inference_cfg = dataclasses.replace(
        run.inference,
        emit_probabilities=emit_prob or run.inference.emit_probabilities,
        **({"threshold": threshold} if threshold is not None else {}))

    scenes = discover_raw_scenes(run.paths.data_root, "test")
    if scene_ids:
        by_id = {scene_id: (band_paths, gt) for scene_id, band_paths, gt in scenes}
        unknown = [s for s in scene_ids if s not in by_id]
        if unknown:
            raise LayoutError(f"unknown scene ids: {', '.join(unknown)}")
        scenes = [(s,) + by_id[s] for s in scene_ids]
    if not scenes:
        raise EmptyDataset(f"no test scenes under {run.paths.data_root / 'test'}")

    mask_dir = run.paths.output_dir / "masks"
    for scene_id, band_paths, _gt in scenes:
        scene = load_scene(band_paths, scene_id)
        prediction = predict_scene(net, scene, inference_cfg)
        path = write_prediction(prediction, mask_dir)
        print(f"{scene_id}: {path}", file=out)
    return 0


def cmd_evaluate(run: RunConfig, pred_dir, gt_dir, out=None) -> int:
    """Score predicted masks against ground truth; write CSV, print a table."""
    out = sys.stdout if out is None else out
    pred = Path(pred_dir) if pred_dir else run.paths.output_dir / "masks"
    gt = Path(gt_dir) if gt_dir else run.paths.data_root / "test"
    per_scene, global_report = evaluate_testset(pred, gt)
    csv_path = write_report_csv(run.paths.output_dir / "report.csv",
                                per_scene, global_report)
    print(render_table(per_scene, global_report), file=out)
    print(f"report: {csv_path}", file=out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG, description="Cloud segmentation pipeline for 4-band scenes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration file")
        p.add_argument("--seed", type=int, default=None,
                       help="override train.seed from the config")

    p_prep = sub.add_parser("prepare", help="cut raw scenes into patches")
    common(p_prep)
    p_prep.add_argument("--patch-size", type=int, default=None,
                        help="square patch side in pixels (default: 384)")

    p_train = sub.add_parser("train", help="train the segmentation network")
    common(p_train)
    p_train.add_argument("--max-epochs", type=int, default=None,
                         help="override train.max_epochs from the config")
    p_train.add_argument("--checkpoint", default=None,
                         help="checkpoint path; resumes from it when it exists")
    p_train.add_argument("--initial-lr", type=float, default=None,
                         help="starting learning rate (default: 1e-4)")
    p_train.add_argument("--decay-rate", type=float, default=None,
                         help="learning-rate decay factor on plateau (default: 0.7)")
    p_train.add_argument("--patience", type=int, default=None,
                         help="epochs without improvement before decay (default: 15)")
    p_train.add_argument("--lr-floor", type=float, default=None,
                         help="learning-rate lower clamp (default: 1e-9)")
    p_train.add_argument("--input-side", type=int, default=None,
                         help="network input resolution in pixels (default: 192)")

    p_pred = sub.add_parser("predict", help="write scene cloud masks")
    common(p_pred)
    p_pred.add_argument("scene_ids", nargs="*",
                        help="scene ids to predict (default: every test scene)")
    p_pred.add_argument("--checkpoint", default=None,
                        help="checkpoint to load (default: from config paths)")
    p_pred.add_argument("--emit-prob", action="store_true",
                        help="also write a float32 probability map per scene")
    p_pred.add_argument("--threshold", type=float, default=None,
                        help="cloud probability cutoff, strict > (default: 0.047)")

    p_eval = sub.add_parser("evaluate", help="score masks against ground truth")
    common(p_eval)
    p_eval.add_argument("--pred-dir", default=None,
                        help="directory of <scene_id>_mask.TIF files")
    p_eval.add_argument("--gt-dir", default=None,
                        help="directory holding the ground-truth masks")
    return parser


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    train_over = {}
    for field_name, arg_name in (("seed", "seed"), ("max_epochs", "max_epochs"),
                                 ("initial_lr", "initial_lr"),
                                 ("decay_rate", "decay_rate"),
                                 ("patience", "patience"), ("lr_floor", "lr_floor")):
        value = getattr(args, arg_name, None)
        if value is not None:
            train_over[field_name] = value
    if train_over:
        run.train = dataclasses.replace(run.train, **train_over)
        if "seed" in train_over:
            run.augment = dataclasses.replace(run.augment, seed=train_over["seed"])
    input_side = getattr(args, "input_side", None)
    if input_side is not None:
        run.network = dataclasses.replace(run.network, input_side=input_side)
        run.inference = dataclasses.replace(run.inference,
                                            model_input_side=input_side)
    return run


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        run = _apply_overrides(load_run_config(args.config), args)
        if args.command == "prepare":
            patch_size = args.patch_size if args.patch_size is not None \
                else run.inference.patch_size
            return cmd_prepare(run, patch_size)
        if args.command == "train":
            return cmd_train(run, args.checkpoint)
        if args.command == "predict":
            return cmd_predict(run, args.scene_ids, args.checkpoint,
                               args.emit_prob, args.threshold)
        if args.command == "evaluate":
            return cmd_evaluate(run, args.pred_dir, args.gt_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"{PROG}: configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"{PROG}: data error: {exc}", file=sys.stderr)
        return 2
    except CloudSegError as exc:
        print(f"{PROG}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
