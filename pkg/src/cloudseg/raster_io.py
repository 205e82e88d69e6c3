"""Scene and mask I/O plus the on-disk dataset layout.

Bands are stored as single-channel unsigned 16-bit TIFFs, ground truth as
8-bit TIFFs; values pass through unchanged (no radiometric calibration).
The patch dataset tree mirrors the 38-Cloud convention::

    <root>/<split>/<band>/<band>_<entry_id>.TIF     band in {blue,green,red,nir,gt}

and a manifest CSV with header ``scene_id,blue,green,red,nir,gt`` describes
one entry per discovered id.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DecodeError,
    DimensionMismatch,
    LayoutError,
    MissingBand,
    MissingGT,
)

# Canonical band order: Landsat 8 Bands 2-5.
BAND_ORDER = ("blue", "green", "red", "nir")
GT_BAND = "gt"
SPLITS = ("train", "test")

# Raw (un-tiled) scene inputs live in <raw_root>/<split>/<scene_id>/<band>.TIF.
RAW_BAND_FILES = {name: f"{name}.TIF" for name in BAND_ORDER + (GT_BAND,)}


@dataclass
class SpectralScene:
    """One acquisition: four co-registered bands stacked as (H, W, 4) uint16."""

    scene_id: str
    bands: np.ndarray
    band_order: tuple = BAND_ORDER

    def __post_init__(self):
        self.bands = np.asarray(self.bands)
        if self.bands.ndim != 3 or self.bands.shape[2] != len(BAND_ORDER):
            raise DimensionMismatch(
                f"scene {self.scene_id!r}: expected (H, W, 4) band stack, got {self.bands.shape}"
            )
        if self.bands.shape[0] < 1 or self.bands.shape[1] < 1:
            raise DimensionMismatch(f"scene {self.scene_id!r}: empty raster")
        if tuple(self.band_order) != BAND_ORDER:
            raise ValueError(f"band_order must be {BAND_ORDER}, got {self.band_order}")

    @property
    def height(self) -> int:
        return self.bands.shape[0]

    @property
    def width(self) -> int:
        return self.bands.shape[1]

    def band(self, name: str) -> np.ndarray:
        return self.bands[:, :, BAND_ORDER.index(name)]


@dataclass
class GroundTruthMask:
    """Binary cloud mask paired with a scene; 1 = cloud, 0 = clear."""

    scene_id: str
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask)
        if self.mask.ndim != 2:
            raise DimensionMismatch(
                f"gt {self.scene_id!r}: expected 2-D mask, got shape {self.mask.shape}"
            )
        bad = np.setdiff1d(np.unique(self.mask), [0, 1])
        if bad.size:
            raise ValueError(f"gt {self.scene_id!r}: non-binary values {bad[:5]}")


@dataclass
class ManifestEntry:
    scene_id: str
    band_paths: dict
    gt_path: Path | None = None


@dataclass
class DatasetManifest:
    split: str
    entries: list = field(default_factory=list)

    @property
    def patch_count(self) -> int:
        return len(self.entries)


def read_raster(path) -> np.ndarray:
    """Decode a single-channel raster file into a 2-D array."""
    path = Path(path)
    if not path.is_file():
        raise MissingBand(f"raster not found: {path}")
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except Exception as exc:
        raise DecodeError(f"cannot decode raster {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DecodeError(f"raster {path} is not single-channel (shape {arr.shape})")
    return arr


def write_raster(path, array: np.ndarray) -> Path:
    """Write a 2-D array as a single-channel TIFF (dtype preserved)."""
    path = Path(path)
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValueError(f"expected 2-D array, got shape {array.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path, format="TIFF")
    return path


def load_scene(band_paths, scene_id: str | None = None) -> SpectralScene:
    """Load four band files into a scene, validating equal dimensions.

    ``band_paths`` is either a mapping ``{band_name: path}`` or a sequence of
    four paths in canonical (blue, green, red, nir) order.
    """
    if isinstance(band_paths, dict):
        paths = {}
        for name in BAND_ORDER:
            if band_paths.get(name) is None:
                raise MissingBand(f"band {name!r} not provided")
            paths[name] = Path(band_paths[name])
    else:
        seq = list(band_paths)
        if len(seq) != len(BAND_ORDER):
            raise MissingBand(f"expected {len(BAND_ORDER)} band paths, got {len(seq)}")
        paths = dict(zip(BAND_ORDER, (Path(p) for p in seq)))

    rasters = {name: read_raster(paths[name]) for name in BAND_ORDER}
    shapes = {name: r.shape for name, r in rasters.items()}
    if len(set(shapes.values())) != 1:
        raise DimensionMismatch(f"band shapes differ: {shapes}")

    if scene_id is None:
        scene_id = paths[BAND_ORDER[0]].stem
        prefix = BAND_ORDER[0] + "_"
        if scene_id.startswith(prefix):
            scene_id = scene_id[len(prefix):]
    stack = np.stack([rasters[name] for name in BAND_ORDER], axis=-1)
    return SpectralScene(scene_id=scene_id, bands=stack.astype(np.uint16))


def write_scene(scene: SpectralScene, directory) -> dict:
    """Write one TIFF per band as <band>_<scene_id>.TIF; returns the paths."""
    directory = Path(directory)
    out = {}
    for i, name in enumerate(BAND_ORDER):
        out[name] = write_raster(directory / f"{name}_{scene.scene_id}.TIF",
                                 scene.bands[:, :, i])
    return out


def load_gt(path, scene: SpectralScene) -> GroundTruthMask:
    """Load a ground-truth raster; any nonzero value maps to 1."""
    arr = read_raster(path)
    if arr.shape != (scene.height, scene.width):
        raise DimensionMismatch(
            f"gt {path} shape {arr.shape} does not match scene "
            f"{scene.scene_id!r} ({scene.height}, {scene.width})"
        )
    return GroundTruthMask(scene_id=scene.scene_id, mask=(arr != 0).astype(np.uint8))


def _discover_band_files(band_dir: Path, band: str) -> dict:
    """Map entry id -> path for files named <band>_<id>.TIF in one band dir."""
    prefix = band + "_"
    found = {}
    for path in band_dir.iterdir():
        if not path.is_file() or path.suffix.lower() not in (".tif", ".tiff"):
            continue
        if path.stem.startswith(prefix):
            found[path.stem[len(prefix):]] = path
    return found


def _resolve_band_dirs(root: Path, split: str) -> dict:
    """Locate the per-band patch directories for a split.

    The native layout is ``<root>/<split>/<band>/``.  Trees that prefix the
    band directories with the split name (``<root>/<split>_<band>/`` or
    ``<root>/<split>/<split>_<band>/``, as public cloud-mask distributions
    do) are accepted as-is so they drop in without renaming.
    """
    candidates = []
    for base in (root / split, root):
        for pattern in ("{band}", split + "_{band}"):
            candidates.append({band: base / pattern.format(band=band)
                               for band in BAND_ORDER + (GT_BAND,)})
    for dirs in candidates:
        if all(dirs[band].is_dir() for band in BAND_ORDER):
            return dirs
    raise LayoutError(
        f"no per-band patch directories for split {split!r} under {root} "
        f"(expected e.g. {root / split / BAND_ORDER[0]})")


def build_manifest(root, split: str) -> DatasetManifest:
    """Scan a patch dataset tree and return one entry per discovered id.

    Every train entry must have a ground-truth file; test entries may omit
    it.  Ordering is deterministic (sorted by id).
    """
    root = Path(root)
    if split not in SPLITS:
        raise LayoutError(f"split must be one of {SPLITS}, got {split!r}")
    band_dirs = _resolve_band_dirs(root, split)

    per_band = {band: _discover_band_files(band_dirs[band], band)
                for band in BAND_ORDER}

    gt_dir = band_dirs[GT_BAND]
    if split == "train" and not gt_dir.is_dir():
        raise MissingGT(f"ground-truth directory missing: {gt_dir}")
    gt_files = _discover_band_files(gt_dir, GT_BAND) if gt_dir.is_dir() else {}

    manifest = DatasetManifest(split=split)
    for entry_id in sorted(per_band[BAND_ORDER[0]]):
        paths = {}
        for band in BAND_ORDER:
            if entry_id not in per_band[band]:
                raise MissingBand(f"entry {entry_id!r}: band {band!r} file missing")
            paths[band] = per_band[band][entry_id]
        gt_path = gt_files.get(entry_id)
        if split == "train" and gt_path is None:
            raise MissingGT(f"entry {entry_id!r}: ground truth missing")
        manifest.entries.append(ManifestEntry(entry_id, paths, gt_path))
    return manifest


MANIFEST_HEADER = ("scene_id",) + BAND_ORDER + (GT_BAND,)


def write_manifest_csv(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            row = [e.scene_id] + [str(e.band_paths[b]) for b in BAND_ORDER]
            row.append(str(e.gt_path) if e.gt_path is not None else "")
            writer.writerow(row)
    return path


def read_manifest_csv(path, split: str) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise LayoutError(f"manifest not found: {path}")
    manifest = DatasetManifest(split=split)
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != MANIFEST_HEADER:
            raise LayoutError(f"bad manifest header in {path}: {header}")
        for row in reader:
            if not row:
                continue
            entry_id = row[0]
            if entry_id in seen:
                raise LayoutError(f"duplicate scene_id {entry_id!r} in {path}")
            seen.add(entry_id)
            paths = dict(zip(BAND_ORDER, (Path(p) for p in row[1:5])))
            gt = Path(row[5]) if row[5] else None
            if split == "train" and gt is None:
                raise MissingGT(f"entry {entry_id!r}: train manifest row lacks gt")
            manifest.entries.append(ManifestEntry(entry_id, paths, gt))
    return manifest


def discover_raw_scenes(raw_root, split: str) -> list:
    """List (scene_id, band_paths, gt_path|None) for raw per-scene directories."""
    split_dir = Path(raw_root) / split
    if not split_dir.is_dir():
        raise LayoutError(f"raw split directory missing: {split_dir}")
    scenes = []
    for scene_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        band_paths = {}
        for band in BAND_ORDER:
            path = scene_dir / RAW_BAND_FILES[band]
            if not path.is_file():
                raise MissingBand(f"scene {scene_dir.name!r}: missing {path.name}")
            band_paths[band] = path
        gt = scene_dir / RAW_BAND_FILES[GT_BAND]
        scenes.append((scene_dir.name, band_paths, gt if gt.is_file() else None))
    return scenes
