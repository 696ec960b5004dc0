"""Low-level file I/O: header+payload binary files, image and mask rasters.

Feature caches and fitted projection models share one container format:
a single UTF-8 JSON line (terminated by ``\\n``) followed by raw
little-endian float32 values. The header always carries a ``magic`` string
and enough shape information to rebuild the arrays, so files are
self-describing and language-neutral.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

def write_header_payload(
    path: str | Path, header: dict, arrays: list[np.ndarray], dtype: str = "<f4"
) -> None:
    """Atomically write a JSON header line plus a concatenated float payload.

    The payload dtype (little-endian float32 by default) is recorded in the
    header so readers never have to guess.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(header, dtype=dtype)
    blob = json.dumps(header).encode("utf-8") + b"\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
            for arr in arrays:
                fh.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header_payload(path: str | Path) -> tuple[dict, np.ndarray]:
    """Read a header+payload file; returns (header, flat payload array)."""
    with open(path, "rb") as fh:
        line = fh.readline()
        header = json.loads(line.decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype=np.dtype(header.get("dtype", "<f4")))
    return header, payload


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit RGB image as an (H, W, 3) uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_label_raster(path: str | Path) -> np.ndarray:
    """Load a label/mask PNG as a nonnegative integer (H, W) array.

    Palette and grayscale images map directly to their label values; RGB
    masks are accepted only when all channels agree (common for binary
    masks saved as RGB).
    """
    with Image.open(path) as im:
        if im.mode in ("P", "L", "I", "I;16"):
            arr = np.asarray(im.convert("I"), dtype=np.int64)
        else:
            rgb = np.asarray(im.convert("RGB"), dtype=np.int64)
            if not (rgb[..., 0] == rgb[..., 1]).all() or not (rgb[..., 1] == rgb[..., 2]).all():
                raise DataError(f"{path}: RGB mask channels disagree; cannot read labels")
            arr = rgb[..., 0]
    if (arr < 0).any():
        raise DataError(f"{path}: negative label values")
    return arr


def save_mask_png(path: str | Path, mask: np.ndarray) -> None:
    """Write a binary mask as a single-channel PNG with values 0/255."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L")
    img.save(path)


def load_mask_png(path: str | Path) -> np.ndarray:
    """Read a mask PNG back to a boolean array (any value > 127 is true)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def save_image_png(path: str | Path, image: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


def save_label_png(path: str | Path, labels: np.ndarray) -> None:
    """Write an integer label raster (values must fit in uint8)."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise DataError("label raster values must be within [0, 255] for PNG export")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(labels.astype(np.uint8), mode="L").save(path)
