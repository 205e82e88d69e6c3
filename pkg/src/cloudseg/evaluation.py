"""Confusion counts and the five mask-quality metrics, plus report rendering.

Cloud is the positive class.  Metrics are ratios of pixel counts:

    jaccard         TP / (TP + FN + FP)
    precision       TP / (TP + FP)
    recall          TP / (TP + FN)
    specificity     TN / (TN + FP)
    overall         (TP + TN) / (TP + TN + FP + FN)

A zero denominator yields ``None`` (flagged undefined) instead of a made-up
0 or 1, so cloud-free scenes cannot silently skew a mean.  Scene-set scores
pool the pixel counts over all scenes before taking ratios; the rendered
table also shows the mean of per-scene values for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, EmptyDataset, MissingGT, NonBinaryInput, ShapeMismatch
from .raster_io import read_raster

PER_SCENE = "per-scene"
GLOBAL = "global"

METRIC_COLUMNS = ("Jaccard", "Precision", "Recall", "Specificity", "Overall")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise DomainError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    jaccard: float | None
    precision: float | None
    recall: float | None
    specificity: float | None
    overall_accuracy: float | None
    scope: str = PER_SCENE

    def values(self):
        return (self.jaccard, self.precision, self.recall,
                self.specificity, self.overall_accuracy)


def _as_binary(array: np.ndarray, what: str) -> np.ndarray:
    array = np.asarray(array)
    values = np.unique(array)
    if not np.isin(values, (0, 1)).all():
        raise NonBinaryInput(f"{what} contains values outside {{0, 1}}: {values[:5]}")
    return array.astype(np.uint8, copy=False)


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Exact pixel counts; both masks binary and of equal shape."""
    pred = _as_binary(pred, "prediction")
    gt = _as_binary(gt, "ground truth")
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    pred_pos = pred == 1
    gt_pos = gt == 1
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred_pos & gt_pos)),
        tn=int(np.count_nonzero(~pred_pos & ~gt_pos)),
        fp=int(np.count_nonzero(pred_pos & ~gt_pos)),
        fn=int(np.count_nonzero(~pred_pos & gt_pos)),
    )


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def metrics(c: ConfusionCounts, scope: str = PER_SCENE) -> MetricsReport:
    return MetricsReport(
        jaccard=_ratio(c.tp, c.tp + c.fn + c.fp),
        precision=_ratio(c.tp, c.tp + c.fp),
        recall=_ratio(c.tp, c.tp + c.fn),
        specificity=_ratio(c.tn, c.tn + c.fp),
        overall_accuracy=_ratio(c.tp + c.tn, c.total),
        scope=scope,
    )


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{100.0 * value:.2f}"


def render_row(report: MetricsReport) -> str:
    """One-line report, percentages to two decimals, e.g.

    ``Jaccard 60.00  Precision 75.00  Recall 75.00  Specificity 83.33  Overall 80.00``
    """
    parts = [f"{name} {_fmt(value)}"
             for name, value in zip(METRIC_COLUMNS, report.values())]
    return "  ".join(parts)


def _mean_of_rows(reports) -> tuple:
    columns = []
    for i in range(5):
        defined = [r.values()[i] for r in reports if r.values()[i] is not None]
        columns.append(sum(defined) / len(defined) if defined else None)
    return tuple(columns)


def render_table(per_scene: dict, global_report: MetricsReport) -> str:
    """Aligned text table: one row per scene, a per-scene mean, a pooled row."""
    rows = [(scene_id, per_scene[scene_id].values()) for scene_id in sorted(per_scene)]
    if per_scene:
        rows.append(("mean of scenes", _mean_of_rows(list(per_scene.values()))))
    rows.append(("all scenes (pooled)", global_report.values()))

    label_w = max(len("Scene"), max(len(label) for label, _ in rows))
    col_w = [max(len(name), 6) for name in METRIC_COLUMNS]
    lines = ["  ".join(["Scene".ljust(label_w)] +
                       [name.rjust(w) for name, w in zip(METRIC_COLUMNS, col_w)])]
    for label, values in rows:
        cells = [_fmt(v).rjust(w) for v, w in zip(values, col_w)]
        lines.append("  ".join([label.ljust(label_w)] + cells))
    return "\n".join(lines)


def write_report_csv(path, per_scene: dict, global_report: MetricsReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("scene_id,jaccard,precision,recall,specificity,overall_accuracy\n")
        for scene_id in sorted(per_scene):
            cells = ",".join(_fmt(v) for v in per_scene[scene_id].values())
            fh.write(f"{scene_id},{cells}\n")
        cells = ",".join(_fmt(v) for v in global_report.values())
        fh.write(f"all scenes (pooled),{cells}\n")
    return path


MASK_SUFFIX = "_mask"


def _find_gt_path(gt_dir: Path, scene_id: str) -> Path | None:
    # Flat naming first, then the raw per-scene directory convention.
    names = [gt_dir / f"gt_{scene_id}", gt_dir / f"{scene_id}_gt",
             gt_dir / scene_id / "gt"]
    for stem in names:
        for ext in (".TIF", ".tif", ".tiff", ".TIFF"):
            candidate = stem.with_suffix(ext)
            if candidate.exists():
                return candidate
    return None


def _load_binary_raster(path: Path) -> np.ndarray:
    # Masks may be stored as {0, 255} or {0, 1}; anything nonzero is cloud.
    return (read_raster(path) != 0).astype(np.uint8)


def evaluate_testset(pred_dir, gt_dir):
    """Score every ``<scene_id>_mask.TIF`` in ``pred_dir`` against its GT.

    Ground truth is looked up in ``gt_dir`` as ``gt_<scene_id>.TIF`` or
    ``<scene_id>_gt.TIF``.  Returns ``(per_scene, global_report)`` where
    ``per_scene`` maps scene id to a MetricsReport; the global report pools
    pixel counts across scenes.
    """
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    mask_paths = sorted(p for p in pred_dir.glob("*")
                        if p.suffix.lower() in (".tif", ".tiff")
                        and p.stem.endswith(MASK_SUFFIX))
    if not mask_paths:
        raise EmptyDataset(f"no *{MASK_SUFFIX}.TIF predictions found in {pred_dir}")

    missing = [p.stem[:-len(MASK_SUFFIX)] for p in mask_paths
               if _find_gt_path(gt_dir, p.stem[:-len(MASK_SUFFIX)]) is None]
    if missing:
        raise MissingGT(f"no ground truth in {gt_dir} for scenes: {', '.join(missing)}")

    per_scene = {}
    total = ConfusionCounts()
    for path in mask_paths:
        scene_id = path.stem[:-len(MASK_SUFFIX)]
        pred = _load_binary_raster(path)
        gt = _load_binary_raster(_find_gt_path(gt_dir, scene_id))
        if pred.shape != gt.shape:
            raise ShapeMismatch(
                f"scene {scene_id!r}: prediction {pred.shape} vs ground truth {gt.shape}")
        counts = confusion(pred, gt)
        per_scene[scene_id] = metrics(counts, scope=PER_SCENE)
        total = total + counts
    return per_scene, metrics(total, scope=GLOBAL)
