"""From token masks to refiner prompts.

Classified tokens are grouped into connected components, each component
becomes a pixel-space bounding-box prompt, and the whole token mask can be
resampled to the fixed 256x256 grid the refiner accepts as a mask prompt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import SizingError
from .geometry import GeometrySpec, token_box_to_pixel_box
from .pca import TokenMask

COARSE_SIZE = 256

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


@dataclass
class TokenComponent:
    """One maximal connected set of plant tokens."""

    coords: np.ndarray  # (n, 2) int rows of (row, col)
    bbox: tuple[int, int, int, int]  # (top, left, bottom, right) inclusive
    area: int


@dataclass
class BoxPrompt:
    """Pixel-space rectangle prompt in padded-image coordinates, inclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int
    source_component: int
    token_area: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise SizingError(f"degenerate box prompt {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max], dtype=np.int64)


@dataclass
class CoarseMask:
    """Token mask resampled to the refiner's fixed 256x256 prompt grid."""

    values: np.ndarray  # (256, 256) bool
    spec: GeometrySpec

    def __post_init__(self):
        if self.values.shape != (COARSE_SIZE, COARSE_SIZE):
            raise SizingError(f"coarse mask must be {COARSE_SIZE}x{COARSE_SIZE}")


def components(
    mask: TokenMask, connectivity: int = 8, min_tokens: int = 1
) -> list[TokenComponent]:
    """Connected components of the true tokens, ordered by bbox (top, left).

    Components with fewer than ``min_tokens`` members are dropped.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCTURE_8 if connectivity == 8 else _STRUCTURE_4
    labels, count = ndimage.label(mask.values, structure=structure)
    out = []
    for sl_idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        coords = np.argwhere(labels == sl_idx)
        if coords.shape[0] < min_tokens:
            continue
        bbox = (sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1)
        out.append(TokenComponent(coords=coords, bbox=bbox, area=coords.shape[0]))
    out.sort(key=lambda c: c.bbox)
    return out


def boxes(comps: list[TokenComponent], spec: GeometrySpec) -> list[BoxPrompt]:
    """Minimal pixel-space box prompt for each component."""
    prompts = []
    for i, comp in enumerate(comps):
        x_min, y_min, x_max, y_max = token_box_to_pixel_box(comp.bbox, spec)
        prompts.append(
            BoxPrompt(
                x_min=x_min,
                y_min=y_min,
                x_max=x_max,
                y_max=y_max,
                source_component=i,
                token_area=comp.area,
            )
        )
    return prompts


def merge_boxes(prompts: list[BoxPrompt]) -> list[BoxPrompt]:
    """Collapse prompts into one global box (the single-box ablation)."""
    if not prompts:
        return []
    return [
        BoxPrompt(
            x_min=min(p.x_min for p in prompts),
            y_min=min(p.y_min for p in prompts),
            x_max=max(p.x_max for p in prompts),
            y_max=max(p.y_max for p in prompts),
            source_component=0,
            token_area=sum(p.token_area for p in prompts),
        )
    ]


def coarse_mask(mask: TokenMask) -> CoarseMask:
    """Resample the token mask to 256x256 with max-pooling semantics.

    An output cell is true iff any token whose extent overlaps the cell is
    true, so small plants are never erased by the resampling. Coverage is
    decided on the exact integer lattice: token r (of R) overlaps cell i
    (of 256) iff r*256 < (i+1)*R and (r+1)*256 > i*R, and likewise for
    columns.
    """
    values = mask.values
    out = np.zeros((COARSE_SIZE, COARSE_SIZE), dtype=bool)
    if values.any():
        rows, cols = values.shape
        r_start, r_stop = _coverage_ranges(rows, COARSE_SIZE)
        c_start, c_stop = _coverage_ranges(cols, COARSE_SIZE)
        # prefix-sum table makes each cell an O(1) "any true token?" query
        acc = np.zeros((rows + 1, cols + 1), dtype=np.int64)
        acc[1:, 1:] = np.cumsum(np.cumsum(values.astype(np.int64), axis=0), axis=1)
        block = (
            acc[r_stop[:, None], c_stop[None, :]]
            - acc[r_start[:, None], c_stop[None, :]]
            - acc[r_stop[:, None], c_start[None, :]]
            + acc[r_start[:, None], c_start[None, :]]
        )
        out = block > 0
    return CoarseMask(values=out, spec=mask.spec)


def _coverage_ranges(n_tokens: int, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Half-open token index ranges [start, stop) covered by each cell."""
    i = np.arange(n_cells, dtype=np.int64)
    start = (i * n_tokens) // n_cells
    stop = -((-(i + 1) * n_tokens) // n_cells)  # ceil division
    return start, stop


def union_masks(masks: list[np.ndarray], shape: tuple[int, int]) -> np.ndarray:
    """Pixelwise OR of binary rasters; an empty list gives all-false."""
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        m = np.asarray(m, dtype=bool)
        if m.shape != tuple(shape):
            raise SizingError(f"mask shape {m.shape} does not match {tuple(shape)}")
        out |= m
    return out
