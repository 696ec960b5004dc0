"""Deterministic synthetic imagery for tests, demos and the mini datasets.

Everything here is seeded and pure-numpy so the same call always produces
bit-identical pixels. Two families of scenes are provided:

* Rectangle scenes: plant regions are axis-aligned rectangles snapped to the
  14 px token grid and separated by at least one empty token row/column, so
  token-level reasoning (components, boxes, coarse masks) has an exact
  ground truth.
* Blob scenes: small images with elliptical plants, per-image color jitter
  and pixel noise; enough variation that a supervised model needs more than
  a couple of samples to generalize.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PATCH_SIZE
from .storage import save_image_png, save_label_png

PLANT_RGB = (52, 165, 58)
SOIL_RGB = (112, 98, 78)


@dataclass(frozen=True)
class RectScene:
    """A token-grid scene: image, pixel mask and the token rectangles."""

    image: np.ndarray
    mask: np.ndarray
    rects: tuple[tuple[int, int, int, int], ...]  # inclusive (r0, c0, r1, c1)
    token_rows: int
    token_cols: int


def _rects_conflict(a, b) -> bool:
    # Expanded-by-one overlap test: keeps rectangles separated by at least
    # one empty token, so each stays its own 8-connected component.
    ar0, ac0, ar1, ac1 = a
    br0, bc0, br1, bc1 = b
    return (ar0 - 1 <= br1 and br0 <= ar1 + 1
            and ac0 - 1 <= bc1 and bc0 <= ac1 + 1)


def sample_token_rects(
    rng: np.random.Generator,
    token_rows: int,
    token_cols: int,
    target_fraction: tuple[float, float] = (0.46, 0.60),
) -> tuple[tuple[int, int, int, int], ...]:
    """Sample disjoint, non-adjacent token rectangles whose total area lands
    inside the target fraction window of the grid.

    The window matters: the zero-shot classifier thresholds scores at the
    mean of all tokens, so scenes far below balance push background tokens
    toward the decision boundary. Sitting slightly above balance is the
    safer side, because a missed plant token rarely changes a component's
    bounding box while a false positive always adds one.
    """
    total = token_rows * token_cols
    lo, hi = target_fraction
    for _ in range(64):
        rects: list[tuple[int, int, int, int]] = []
        covered = 0
        target = rng.uniform(lo, hi) * total
        for _ in range(600):
            if covered >= target:
                break
            h = int(rng.integers(3, min(10, token_rows) + 1))
            w = int(rng.integers(3, min(12, token_cols) + 1))
            if covered + h * w > hi * total:
                continue
            r0 = int(rng.integers(0, token_rows - h + 1))
            c0 = int(rng.integers(0, token_cols - w + 1))
            cand = (r0, c0, r0 + h - 1, c0 + w - 1)
            if any(_rects_conflict(cand, r) for r in rects):
                continue
            rects.append(cand)
            covered += h * w
        if covered >= lo * total:
            return tuple(sorted(rects))
    raise RuntimeError("could not pack rectangles into the target window")


def render_rect_scene(
    rng: np.random.Generator,
    rects: tuple[tuple[int, int, int, int], ...],
    token_rows: int,
    token_cols: int,
    noise_sigma: float = 4.0,
) -> RectScene:
    """Paint token rectangles as plant-colored blocks on a soil background."""
    h = token_rows * PATCH_SIZE
    w = token_cols * PATCH_SIZE
    mask = np.zeros((h, w), dtype=bool)
    for r0, c0, r1, c1 in rects:
        mask[r0 * PATCH_SIZE:(r1 + 1) * PATCH_SIZE,
             c0 * PATCH_SIZE:(c1 + 1) * PATCH_SIZE] = True
    image = np.empty((h, w, 3), dtype=np.float64)
    image[:] = SOIL_RGB
    image[mask] = PLANT_RGB
    image += rng.normal(0.0, noise_sigma, size=image.shape)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    return RectScene(image=image, mask=mask, rects=rects,
                     token_rows=token_rows, token_cols=token_cols)


def make_rect_scene(
    seed: int, token_rows: int = 20, token_cols: int = 24, **kwargs
) -> RectScene:
    rng = np.random.default_rng(seed)
    rects = sample_token_rects(rng, token_rows, token_cols, **kwargs)
    return render_rect_scene(rng, rects, token_rows, token_cols)


def make_rect_corpus(
    n: int, seed: int = 0, token_rows: int = 20, token_cols: int = 24
) -> list[RectScene]:
    return [make_rect_scene(seed * 10_000 + i, token_rows, token_cols)
            for i in range(n)]


def make_background_scene(
    seed: int, token_rows: int = 5, token_cols: int = 6
) -> RectScene:
    """A scene with no plant at all; exercises the zero-prompt path."""
    rng = np.random.default_rng(seed)
    return render_rect_scene(rng, (), token_rows, token_cols)


def make_half_scene(seed: int, token_rows: int = 10, token_cols: int = 12) -> RectScene:
    """Left half plant, right half soil; exactly balanced token counts."""
    rng = np.random.default_rng(seed)
    rect = (0, 0, token_rows - 1, token_cols // 2 - 1)
    return render_rect_scene(rng, (rect,), token_rows, token_cols)


def make_blob_pair(
    rng: np.random.Generator, size: int = 56
) -> tuple[np.ndarray, np.ndarray]:
    """One blob image and its mask, with per-image color jitter and noise."""
    plant = np.array([
        rng.integers(20, 90),
        rng.integers(120, 210),
        rng.integers(20, 90),
    ], dtype=np.float64)
    soil = np.array([
        rng.integers(80, 150),
        rng.integers(60, 120),
        rng.integers(40, 110),
    ], dtype=np.float64)
    mask = np.zeros((size, size), dtype=bool)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(1, 4))):
        cy = rng.uniform(0.2, 0.8) * size
        cx = rng.uniform(0.2, 0.8) * size
        ry = rng.uniform(0.12, 0.3) * size
        rx = rng.uniform(0.12, 0.3) * size
        mask |= ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    image = np.where(mask[..., None], plant, soil)
    image += rng.normal(0.0, rng.uniform(4.0, 12.0), size=image.shape)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    return image, mask


def make_blob_corpus(
    n: int, seed: int = 0, size: int = 56
) -> list[tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(seed)
    return [make_blob_pair(rng, size=size) for _ in range(n)]


# --- mini datasets in the real on-disk layouts ------------------------------

_MINI_SPLITS = {"train": 4, "val": 3, "test": 2}


def _mini_scene(rng: np.random.Generator, size: int = 154):
    """A blob-style scene sized for the mini datasets (labels are instances)."""
    yy, xx = np.mgrid[0:size, 0:size]
    labels = np.zeros((size, size), dtype=np.uint8)
    n_blobs = int(rng.integers(2, 5))
    for idx in range(1, n_blobs + 1):
        cy = rng.uniform(0.15, 0.85) * size
        cx = rng.uniform(0.15, 0.85) * size
        ry = rng.uniform(0.08, 0.2) * size
        rx = rng.uniform(0.08, 0.2) * size
        blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        labels[blob] = idx
    plant = np.array(PLANT_RGB, dtype=np.float64) + rng.normal(0, 6, size=3)
    soil = np.array(SOIL_RGB, dtype=np.float64) + rng.normal(0, 6, size=3)
    image = np.where((labels > 0)[..., None], plant, soil)
    image += rng.normal(0.0, 5.0, size=image.shape)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    return image, labels


def write_mini_dataset(
    dataset_id: str, root: str | Path, seed: int = 0, size: int = 154
) -> Path:
    """Write a tiny synthetic dataset in the documented layout of
    ``dataset_id``. Handy for smoke tests and CLI walkthroughs when the real
    corpora are not on disk.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    counter = 0
    for split, count in _MINI_SPLITS.items():
        for _ in range(count):
            image, labels = _mini_scene(rng, size=size)
            name = f"img_{counter:04d}"
            counter += 1
            if dataset_id == "phenobench":
                img_dir = root / split / "images"
                ann_dir = root / split / "semantics"
                # remap instance ids into the class vocabulary (1..4)
                semantics = np.where(labels > 0, (labels - 1) % 4 + 1, 0)
                img_dir.mkdir(parents=True, exist_ok=True)
                ann_dir.mkdir(parents=True, exist_ok=True)
                save_image_png(img_dir / f"{name}.png", image)
                save_label_png(ann_dir / f"{name}.png", semantics.astype(np.uint8))
            elif dataset_id in ("appletree", "plantgrowth"):
                img_dir = root / split / "images"
                ann_dir = root / split / "masks"
                img_dir.mkdir(parents=True, exist_ok=True)
                ann_dir.mkdir(parents=True, exist_ok=True)
                save_image_png(img_dir / f"{name}.png", image)
                save_label_png(ann_dir / f"{name}.png",
                               (labels > 0).astype(np.uint8) * 255)
            elif dataset_id == "cvppp2017":
                sub = root / split / "A1"
                sub.mkdir(parents=True, exist_ok=True)
                save_image_png(sub / f"{name}_rgb.png", image)
                save_label_png(sub / f"{name}_label.png", labels)
            else:
                raise ValueError(f"unknown dataset id '{dataset_id}'")
    return root
