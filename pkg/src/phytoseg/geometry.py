"""Deterministic, invertible image geometry.

Images are capped at 1036 px on the shortest edge (twice the 518 px native
grid of the token encoders, and a multiple of the 14 px patch), then padded
on the bottom and right so both spatial dims are multiples of 14. A
GeometrySpec records the full arithmetic so coordinates can be mapped
between original-pixel, padded-pixel, and token-grid spaces in either
direction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import cv2
import numpy as np

from .errors import SizingError

PATCH_SIZE = 14
MAX_SHORT_EDGE = 1036  # 2 * 518, a multiple of the patch size


@dataclass(frozen=True)
class GeometrySpec:
    """Resize/pad arithmetic linking original image, padded image, token grid."""

    orig_h: int
    orig_w: int
    scale: float
    resized_h: int
    resized_w: int
    padded_h: int
    padded_w: int
    pad_bottom: int
    pad_right: int
    patch: int = PATCH_SIZE

    @property
    def token_rows(self) -> int:
        return self.padded_h // self.patch

    @property
    def token_cols(self) -> int:
        return self.padded_w // self.patch

    def to_json(self) -> dict:
        d = asdict(self)
        d["token_rows"] = self.token_rows
        d["token_cols"] = self.token_cols
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GeometrySpec":
        fields = {k: d[k] for k in (
            "orig_h", "orig_w", "scale", "resized_h", "resized_w",
            "padded_h", "padded_w", "pad_bottom", "pad_right", "patch",
        )}
        return cls(**fields)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _ceil_to_multiple(n: int, m: int) -> int:
    return ((n + m - 1) // m) * m


def plan_geometry(orig_h: int, orig_w: int, *, max_short_edge: int = MAX_SHORT_EDGE) -> GeometrySpec:
    """Plan the resize/pad arithmetic for an image of the given size.

    Downscaling happens only when the shortest edge exceeds the cap; the
    aspect ratio is preserved and resized dims round half-up. Padding is
    bottom/right only, to the next multiple of the patch size.
    """
    if orig_h < PATCH_SIZE or orig_w < PATCH_SIZE:
        raise SizingError(
            f"image {orig_h}x{orig_w} is smaller than one {PATCH_SIZE} px patch"
        )
    short = min(orig_h, orig_w)
    if short > max_short_edge:
        scale = max_short_edge / short
        resized_h = _round_half_up(orig_h * scale)
        resized_w = _round_half_up(orig_w * scale)
    else:
        scale = 1.0
        resized_h, resized_w = orig_h, orig_w
    padded_h = _ceil_to_multiple(resized_h, PATCH_SIZE)
    padded_w = _ceil_to_multiple(resized_w, PATCH_SIZE)
    return GeometrySpec(
        orig_h=orig_h,
        orig_w=orig_w,
        scale=scale,
        resized_h=resized_h,
        resized_w=resized_w,
        padded_h=padded_h,
        padded_w=padded_w,
        pad_bottom=padded_h - resized_h,
        pad_right=padded_w - resized_w,
    )


def apply_geometry(image: np.ndarray, spec: GeometrySpec) -> np.ndarray:
    """Resize (bilinear, downscale only) and zero-pad an RGB image per spec."""
    image = np.asarray(image)
    if image.shape[:2] != (spec.orig_h, spec.orig_w):
        raise SizingError(
            f"image is {image.shape[0]}x{image.shape[1]}, spec expects "
            f"{spec.orig_h}x{spec.orig_w}"
        )
    if (spec.resized_h, spec.resized_w) != (spec.orig_h, spec.orig_w):
        resized = cv2.resize(
            image, (spec.resized_w, spec.resized_h), interpolation=cv2.INTER_LINEAR
        )
    else:
        resized = image
    if spec.pad_bottom == 0 and spec.pad_right == 0:
        return resized.copy() if resized is image else resized
    out_shape = (spec.padded_h, spec.padded_w) + resized.shape[2:]
    out = np.zeros(out_shape, dtype=resized.dtype)
    out[: spec.resized_h, : spec.resized_w] = resized
    return out


def apply_geometry_mask(mask: np.ndarray, spec: GeometrySpec) -> np.ndarray:
    """Bring a binary mask from original to padded resolution (nearest + pad)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (spec.orig_h, spec.orig_w):
        raise SizingError(
            f"mask is {mask.shape}, spec expects {(spec.orig_h, spec.orig_w)}"
        )
    if (spec.resized_h, spec.resized_w) != (spec.orig_h, spec.orig_w):
        mask = _nearest_resample(mask, spec.resized_h, spec.resized_w)
    out = np.zeros((spec.padded_h, spec.padded_w), dtype=bool)
    out[: spec.resized_h, : spec.resized_w] = mask
    return out


def _nearest_resample(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Center-aligned nearest-neighbor resample of a 2-D array."""
    in_h, in_w = mask.shape
    rows = np.minimum(((np.arange(out_h) + 0.5) * in_h / out_h).astype(np.int64), in_h - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * in_w / out_w).astype(np.int64), in_w - 1)
    return mask[rows[:, None], cols[None, :]]


def restore_mask(mask: np.ndarray, spec: GeometrySpec) -> np.ndarray:
    """Bring a token- or padded-resolution mask back to (orig_h, orig_w).

    Token-resolution input is expanded by replicating each token value over
    its 14x14 pixel block. Padding is cropped, then the content region is
    nearest-neighbor resampled to the original size. Output is boolean.
    """
    mask = np.asarray(mask)
    if mask.shape == (spec.token_rows, spec.token_cols):
        pixel = np.repeat(np.repeat(mask.astype(bool), spec.patch, axis=0), spec.patch, axis=1)
    elif mask.shape == (spec.padded_h, spec.padded_w):
        pixel = mask.astype(bool)
    else:
        raise SizingError(
            f"mask shape {mask.shape} is neither token resolution "
            f"{(spec.token_rows, spec.token_cols)} nor padded resolution "
            f"{(spec.padded_h, spec.padded_w)}"
        )
    content = pixel[: spec.resized_h, : spec.resized_w]
    if (spec.resized_h, spec.resized_w) == (spec.orig_h, spec.orig_w):
        return content.copy()
    return _nearest_resample(content, spec.orig_h, spec.orig_w)


def token_box_to_pixel_box(
    box: tuple[int, int, int, int], spec: GeometrySpec
) -> tuple[int, int, int, int]:
    """Map an inclusive token-grid rectangle to an inclusive pixel rectangle.

    ``box`` is (r_min, c_min, r_max, c_max). The result (x_min, y_min,
    x_max, y_max) covers every pixel of every member token, then is clipped
    to the resized content region so prompts never cover padding.
    """
    r_min, c_min, r_max, c_max = box
    if r_min > r_max or c_min > c_max:
        raise SizingError(f"empty token box {box}")
    if r_min < 0 or c_min < 0 or r_max >= spec.token_rows or c_max >= spec.token_cols:
        raise SizingError(
            f"token box {box} outside grid {spec.token_rows}x{spec.token_cols}"
        )
    p = spec.patch
    x_min = p * c_min
    y_min = p * r_min
    x_max = min(p * (c_max + 1) - 1, spec.resized_w - 1)
    y_max = min(p * (r_max + 1) - 1, spec.resized_h - 1)
    return x_min, y_min, x_max, y_max


def compute_pad_mask(spec: GeometrySpec) -> np.ndarray:
    """Boolean token grid marking tokens whose block has no content pixels.

    Because padding is always under one patch wide, every token block
    intersects content for specs produced by :func:`plan_geometry`; the
    computation stays general for hand-built specs.
    """
    rows = np.arange(spec.token_rows) * spec.patch
    cols = np.arange(spec.token_cols) * spec.patch
    row_all_pad = rows >= spec.resized_h
    col_all_pad = cols >= spec.resized_w
    return row_all_pad[:, None] | col_all_pad[None, :]
