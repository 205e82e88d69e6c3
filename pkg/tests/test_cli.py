"""End-to-end command-line flows: prepare, train, predict, evaluate."""

import shutil

import numpy as np
import pytest

from cloudseg.cli import main
from cloudseg.model import NetworkConfig, load_checkpoint
from cloudseg.raster_io import read_raster
from cloudseg.synthetic import write_synthetic_dataset

SMALL_NETWORK = """
network:
  input_side: 16
  depth_schedule: [4, 8]
  bottleneck_depth: 16
"""


@pytest.fixture(scope="module")
def raw_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("raw")
    # One 768x768 train scene and one test scene: a 2x2 grid of 384 patches.
    write_synthetic_dataset(root, train_scenes=1, test_scenes=1,
                            height=768, width=768, seed=0)
    return root


def _config(tmp_path, raw_root, extra="", train_extra=""):
    out_dir = tmp_path / "run"
    text = (
        f"paths:\n  data_root: {raw_root}\n  output_dir: {out_dir}\n"
        + SMALL_NETWORK
        + "train:\n  seed: 0\n  max_epochs: 2\n  batch_size: 2\n"
          "  initial_lr: 7.0e-4\n  weight_init: glorot_uniform\n"
        + train_extra
        + "augment:\n  enabled: false\n"
        + extra
    )
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return path, out_dir


class TestParsing:
    def test_help_shows_pipeline_constants(self, capsys):
        text = ""
        for args in (["--help"], ["prepare", "--help"], ["train", "--help"],
                     ["predict", "--help"], ["evaluate", "--help"]):
            assert main(args) == 0
            text += capsys.readouterr().out
        for token in ("1e-4", "0.7", "15", "1e-9", "0.047", "384", "192"):
            assert token in text, token

    def test_missing_config_flag_is_usage_error(self, capsys):
        assert main(["train"]) == 1
        assert "config" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["transmogrify", "--config", "x.yaml"]) == 1

    def test_no_arguments_is_usage_error(self):
        assert main([]) == 1

    def test_nonexistent_config_file(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 1
        assert "configuration error" in capsys.readouterr().err

    def test_config_without_seed_rejected(self, tmp_path, raw_root, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text(f"paths:\n  data_root: {raw_root}\n  output_dir: {tmp_path}\n")
        assert main(["train", "--config", str(path)]) == 1
        assert "seed" in capsys.readouterr().err


class TestPrepare:
    def test_cuts_raw_scenes_into_patches(self, tmp_path, raw_root, capsys):
        config, out_dir = _config(tmp_path, raw_root)
        assert main(["prepare", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "train: 4 patches" in out
        assert "test: 4 patches" in out
        assert (out_dir / "manifests" / "train.csv").is_file()
        assert (out_dir / "manifests" / "test.csv").is_file()
        patch = (out_dir / "prepared" / "train" / "blue" /
                 "blue_patch_0_0_train_scene_00.TIF")
        assert patch.is_file()
        assert read_raster(patch).shape == (384, 384)
        gt_patch = read_raster(out_dir / "prepared" / "train" / "gt" /
                               "gt_patch_0_0_train_scene_00.TIF")
        assert set(np.unique(gt_patch)) <= {0, 255}

    def test_prepare_is_idempotent(self, tmp_path, raw_root, capsys):
        config, out_dir = _config(tmp_path, raw_root)
        assert main(["prepare", "--config", str(config)]) == 0
        first = (out_dir / "manifests" / "train.csv").read_bytes()
        assert main(["prepare", "--config", str(config)]) == 0
        assert (out_dir / "manifests" / "train.csv").read_bytes() == first
        capsys.readouterr()

    def test_prepare_indexes_existing_patch_tree(self, tmp_path, raw_root, capsys):
        # First cut into a staging run, then point a second run directly at
        # the prepared tree: no re-cutting, just a manifest.
        config, out_dir = _config(tmp_path, raw_root)
        assert main(["prepare", "--config", str(config)]) == 0
        capsys.readouterr()

        staged = out_dir / "prepared"
        config2 = tmp_path / "indexed.yaml"
        out2 = tmp_path / "run2"
        config2.write_text(
            f"paths:\n  data_root: {staged}\n  output_dir: {out2}\n"
            "train:\n  seed: 0\n")
        assert main(["prepare", "--config", str(config2)]) == 0
        out = capsys.readouterr().out
        assert "train: 4 patches" in out
        assert "cut" not in out
        assert (out2 / "manifests" / "train.csv").is_file()

    def test_prepare_without_any_split(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        config = tmp_path / "c.yaml"
        config.write_text(
            f"paths:\n  data_root: {empty}\n  output_dir: {tmp_path / 'o'}\n"
            "train:\n  seed: 0\n")
        assert main(["prepare", "--config", str(config)]) == 2
        assert "data error" in capsys.readouterr().err


class TestTrain:
    def test_requires_prepared_data(self, tmp_path, raw_root, capsys):
        config, _ = _config(tmp_path, raw_root)
        assert main(["train", "--config", str(config)]) == 2
        assert "prepare" in capsys.readouterr().err

    def test_zero_epochs_writes_initialized_checkpoint(self, tmp_path, raw_root,
                                                       capsys):
        config, out_dir = _config(tmp_path, raw_root)
        assert main(["prepare", "--config", str(config)]) == 0
        assert main(["train", "--config", str(config), "--max-epochs", "0"]) == 0
        out = capsys.readouterr().out
        assert "checkpoint:" in out
        ckpt = out_dir / "checkpoint.npz"
        net, info = load_checkpoint(ckpt)
        assert net.config == NetworkConfig(input_side=16, depth_schedule=(4, 8),
                                           bottleneck_depth=16)
        assert info["extra"]["epoch"] == 0
        history = out_dir / "history.csv"
        assert history.read_text() == "epoch,loss,lr\n"

    def test_short_run_and_resume(self, tmp_path, raw_root, capsys):
        config, out_dir = _config(tmp_path, raw_root)
        assert main(["prepare", "--config", str(config)]) == 0
        assert main(["train", "--config", str(config)]) == 0
        first = capsys.readouterr().out
        assert "resuming" not in first
        history = (out_dir / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,loss,lr"
        assert len(history) == 3  # two epochs from the config
        assert (out_dir / "checkpoint.npz").is_file()

        assert main(["train", "--config", str(config), "--max-epochs", "1"]) == 0
        second = capsys.readouterr().out
        assert "resuming from" in second

    def test_checkpoint_flag_sets_destination(self, tmp_path, raw_root, capsys):
        config, out_dir = _config(tmp_path, raw_root)
        assert main(["prepare", "--config", str(config)]) == 0
        target = tmp_path / "elsewhere" / "weights.npz"
        assert main(["train", "--config", str(config), "--max-epochs", "0",
                     "--checkpoint", str(target)]) == 0
        assert target.is_file()
        capsys.readouterr()


@pytest.fixture(scope="module")
def trained(tmp_path_factory, raw_root):
    """A prepared workspace with a two-epoch checkpoint, shared read-only."""
    tmp_path = tmp_path_factory.mktemp("trained")
    config, out_dir = _config(tmp_path, raw_root)
    assert main(["prepare", "--config", str(config)]) == 0
    assert main(["train", "--config", str(config)]) == 0
    return config, out_dir


class TestPredict:
    def test_writes_scene_masks(self, trained, capsys):
        config, out_dir = trained
        mask_path = out_dir / "masks" / "test_scene_00_mask.TIF"
        if mask_path.exists():
            mask_path.unlink()
        assert main(["predict", "--config", str(config)]) == 0
        assert "test_scene_00" in capsys.readouterr().out
        stored = read_raster(mask_path)
        assert stored.shape == (768, 768)
        assert set(np.unique(stored)) <= {0, 255}

    def test_emit_prob_writes_float_map(self, trained, capsys):
        config, out_dir = trained
        assert main(["predict", "--config", str(config), "--emit-prob"]) == 0
        capsys.readouterr()
        probs = read_raster(out_dir / "masks" / "test_scene_00_prob.TIF")
        assert probs.dtype == np.float32
        assert probs.shape == (768, 768)
        assert probs.min() >= 0.0 and probs.max() <= 1.0

    def test_explicit_scene_selection(self, trained, capsys):
        config, _ = trained
        assert main(["predict", "--config", str(config), "test_scene_00"]) == 0
        capsys.readouterr()

    def test_unknown_scene_id(self, trained, capsys):
        config, _ = trained
        assert main(["predict", "--config", str(config), "no_such_scene"]) == 2
        assert "no_such_scene" in capsys.readouterr().err

    def test_missing_checkpoint(self, tmp_path, raw_root, capsys):
        config, _ = _config(tmp_path, raw_root)
        assert main(["predict", "--config", str(config)]) == 3
        assert "CheckpointMismatch" in capsys.readouterr().err

    def test_architecture_mismatch(self, trained, tmp_path, raw_root, capsys):
        # A config asking for a deeper network cannot consume the checkpoint.
        _, out_dir = trained
        config = tmp_path / "deeper.yaml"
        config.write_text(
            f"paths:\n  data_root: {raw_root}\n  output_dir: {tmp_path / 'd'}\n"
            f"  checkpoint: {out_dir / 'checkpoint.npz'}\n"
            "network:\n  input_side: 16\n  depth_schedule: [4, 8, 16]\n"
            "  bottleneck_depth: 32\n"
            "train:\n  seed: 0\n")
        assert main(["predict", "--config", str(config)]) == 3
        assert "CheckpointMismatch" in capsys.readouterr().err


class TestEvaluate:
    def test_perfect_predictions_score_100(self, tmp_path, raw_root, capsys):
        pred_dir = tmp_path / "preds"
        pred_dir.mkdir()
        gt = raw_root / "test" / "test_scene_00" / "gt.TIF"
        shutil.copyfile(gt, pred_dir / "test_scene_00_mask.TIF")
        config, out_dir = _config(tmp_path, raw_root)
        assert main(["evaluate", "--config", str(config),
                     "--pred-dir", str(pred_dir),
                     "--gt-dir", str(raw_root / "test")]) == 0
        out = capsys.readouterr().out
        scene_line = [l for l in out.splitlines() if l.startswith("test_scene_00")][0]
        assert scene_line.count("100.00") == 5
        assert "all scenes (pooled)" in out
        report = (out_dir / "report.csv").read_text().splitlines()
        assert report[1] == "test_scene_00,100.00,100.00,100.00,100.00,100.00"

    def test_scores_real_predictions(self, trained, capsys):
        config, out_dir = trained
        assert main(["predict", "--config", str(config)]) == 0
        capsys.readouterr()
        assert main(["evaluate", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "Jaccard" in out and "Overall" in out
        assert (out_dir / "report.csv").is_file()

    def test_empty_prediction_dir(self, tmp_path, raw_root, capsys):
        config, _ = _config(tmp_path, raw_root)
        empty = tmp_path / "no_masks"
        empty.mkdir()
        assert main(["evaluate", "--config", str(config),
                     "--pred-dir", str(empty),
                     "--gt-dir", str(raw_root / "test")]) == 2
        assert "data error" in capsys.readouterr().err
