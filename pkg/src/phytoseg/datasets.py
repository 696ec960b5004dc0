"""Dataset adapters for the four evaluation corpora.

Each adapter walks a documented on-disk layout, pairs images with their
annotation rasters, and collapses instance or class labels into one binary
plant mask. Records stream in lexicographic id order so runs are
reproducible.

Expected layouts (``<root>`` is the dataset root, ``<split>`` one of
train/val/test):

* ``phenobench``:   ``<root>/<split>/images/*.png`` with class rasters in
  ``<root>/<split>/semantics/`` (0 = soil; 1-4 = crop, weed and their
  partially-visible variants, all of which count as plant).
* ``appletree``:    ``<root>/<split>/images/*`` with binary masks in
  ``<root>/<split>/masks/``.
* ``plantgrowth``:  same ``images/`` + ``masks/`` layout as appletree.
* ``cvppp2017``:    ``<root>/<split>/<subset>/plant*_rgb.png`` with leaf
  instance rasters ``plant*_label.png`` (merged to one plant mask) or
  precomputed ``plant*_fg.png`` foreground masks; subset directories are
  optional.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .storage import load_image, load_label_raster

logger = logging.getLogger(__name__)

DATASET_IDS = ("phenobench", "appletree", "plantgrowth", "cvppp2017")
SPLITS = ("train", "val", "test")

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

# Phenobench class ids that count as plant (crop, weed, partial crop,
# partial weed). Soil is 0.
PHENOBENCH_PLANT_LABELS = frozenset({1, 2, 3, 4})


@dataclass
class ImageRecord:
    """One image with an optional ground-truth plant mask."""

    id: str
    image_path: Path
    mask_path: Path | None
    split: str
    dataset_id: str

    def load_image(self) -> np.ndarray:
        return load_image(self.image_path)

    def load_gt_mask(self) -> np.ndarray | None:
        """Binary plant mask at image resolution, or None when unlabeled."""
        if self.mask_path is None:
            return None
        labels = load_label_raster(self.mask_path)
        if self.dataset_id == "phenobench":
            mask = merge_instances(labels, plant_labels=PHENOBENCH_PLANT_LABELS)
        else:
            mask = merge_instances(labels)
        image = self.load_image()
        if mask.shape != image.shape[:2]:
            raise DataError(
                f"{self.id}: mask {mask.shape} does not match image {image.shape[:2]}"
            )
        return mask


def merge_instances(
    instance_mask: np.ndarray, plant_labels: frozenset[int] | None = None
) -> np.ndarray:
    """Collapse an integer label raster into one binary plant mask.

    With ``plant_labels`` given, only those label values count as plant;
    otherwise every nonzero label does (the instance-merge case). Already
    binary masks pass through unchanged.
    """
    labels = np.asarray(instance_mask)
    if labels.dtype == bool:
        labels = labels.astype(np.int64)
    if (labels < 0).any():
        raise DataError("instance mask contains negative labels")
    if plant_labels is None:
        return labels != 0
    return np.isin(labels, list(plant_labels))


def _stem_index(directory: Path, exts: tuple[str, ...] = IMAGE_EXTS) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in exts:
            out[p.stem] = p
    return out


def _pair_dirs(
    dataset_id: str, split: str, images_dir: Path, masks_dir: Path
) -> list[ImageRecord]:
    images = _stem_index(images_dir)
    if not images:
        logger.warning("%s/%s: no images found under %s", dataset_id, split, images_dir)
        return []
    if not masks_dir.is_dir():
        logger.warning(
            "%s/%s: no annotation directory %s; records carry no ground truth",
            dataset_id, split, masks_dir,
        )
        return [
            ImageRecord(id=stem, image_path=path, mask_path=None,
                        split=split, dataset_id=dataset_id)
            for stem, path in sorted(images.items())
        ]
    masks = _stem_index(masks_dir)
    orphan_images = sorted(set(images) - set(masks))
    orphan_masks = sorted(set(masks) - set(images))
    if orphan_images or orphan_masks:
        raise DataError(
            f"{dataset_id}/{split}: image/mask pairing mismatch; "
            f"images without masks: {orphan_images[:10]}; "
            f"masks without images: {orphan_masks[:10]}"
        )
    return [
        ImageRecord(id=stem, image_path=path, mask_path=masks[stem],
                    split=split, dataset_id=dataset_id)
        for stem, path in sorted(images.items())
    ]


def _load_cvppp(root: Path, split: str) -> list[ImageRecord]:
    split_dir = root / split
    subset_dirs = [d for d in sorted(split_dir.iterdir()) if d.is_dir()] or [split_dir]
    records = []
    orphans = []
    for sub in subset_dirs:
        rgb_files = sorted(sub.glob("*_rgb.png"))
        for rgb in rgb_files:
            stem = rgb.name[: -len("_rgb.png")]
            label = rgb.with_name(stem + "_label.png")
            fg = rgb.with_name(stem + "_fg.png")
            mask = label if label.exists() else (fg if fg.exists() else None)
            if mask is None:
                orphans.append(rgb.name)
                continue
            rec_id = stem if sub == split_dir else f"{sub.name}_{stem}"
            records.append(
                ImageRecord(id=rec_id, image_path=rgb, mask_path=mask,
                            split=split, dataset_id="cvppp2017")
            )
    if orphans:
        raise DataError(
            f"cvppp2017/{split}: images without label or fg rasters: {orphans[:10]}"
        )
    if not records:
        logger.warning("cvppp2017/%s: no *_rgb.png images found under %s", split, split_dir)
    records.sort(key=lambda r: r.id)
    return records


def load(dataset_id: str, root: str | Path, split: str) -> list[ImageRecord]:
    """Load one split of a dataset as a lexicographically ordered record list."""
    if dataset_id not in DATASET_IDS:
        raise DataError(f"unknown dataset '{dataset_id}'; expected one of {DATASET_IDS}")
    if split not in SPLITS:
        raise DataError(f"unknown split '{split}'; expected one of {SPLITS}")
    root = Path(root)
    if not root.is_dir():
        raise DataError(
            f"dataset root '{root}' does not exist; expected the layout "
            f"documented for '{dataset_id}' (see module docstring)"
        )
    split_dir = root / split
    if not split_dir.is_dir():
        logger.warning("%s: split directory %s is missing", dataset_id, split_dir)
        return []
    if dataset_id == "cvppp2017":
        return _load_cvppp(root, split)
    masks_name = "semantics" if dataset_id == "phenobench" else "masks"
    images_dir = split_dir / "images"
    if not images_dir.is_dir():
        logger.warning("%s/%s: expected an images/ directory under %s",
                       dataset_id, split, split_dir)
        return []
    return _pair_dirs(dataset_id, split, images_dir, split_dir / masks_name)


def verify(dataset_id: str, root: str | Path) -> dict:
    """Check layout and pairing for every split; returns a report mapping.

    Each split maps to either ``{"records": n, "with_gt": m}`` or an
    ``{"error": message}`` entry. Raises nothing so the CLI can render the
    full picture before deciding the exit code.
    """
    report: dict = {"dataset": dataset_id, "root": str(root), "splits": {}}
    for split in SPLITS:
        try:
            records = load(dataset_id, root, split)
            report["splits"][split] = {
                "records": len(records),
                "with_gt": sum(1 for r in records if r.mask_path is not None),
            }
        except DataError as exc:
            report["splits"][split] = {"error": str(exc)}
    return report
