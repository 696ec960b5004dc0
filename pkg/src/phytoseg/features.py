"""On-disk feature cache and batch extraction.

One cache file per (image content, encoder, geometry) triple. Files are
self-describing: a JSON header with the grid shape, embedding width,
encoder id, and content hash, followed by the raw little-endian float32
features. Writes go through a temp file and an atomic rename so concurrent
workers never observe a torn entry.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .encoders import Encoder, TokenGrid, image_content_hash
from .geometry import GeometrySpec
from .storage import read_header_payload, write_header_payload

logger = logging.getLogger(__name__)

_MAGIC = "phytoseg-features-v1"


def cache_key(content_hash: str, encoder_id: str, spec: GeometrySpec) -> str:
    h = hashlib.sha256()
    h.update(content_hash.encode())
    h.update(encoder_id.encode())
    h.update(json.dumps(spec.to_json(), sort_keys=True).encode())
    return h.hexdigest()[:40]


def cache_path(cache_dir: str | Path, content_hash: str, encoder_id: str, spec: GeometrySpec) -> Path:
    return Path(cache_dir) / f"{cache_key(content_hash, encoder_id, spec)}.feat"


def write_cache_entry(path: Path, grid: TokenGrid, content_hash: str) -> None:
    header = {
        "magic": _MAGIC,
        "encoder_id": grid.encoder_id,
        "token_rows": grid.spec.token_rows,
        "token_cols": grid.spec.token_cols,
        "dim": grid.dim,
        "content_hash": content_hash,
        "geometry": grid.spec.to_json(),
    }
    write_header_payload(path, header, [grid.features])


def read_cache_entry(path: Path, encoder_id: str, spec: GeometrySpec, content_hash: str) -> TokenGrid | None:
    """Load a cache entry, or None when absent, stale, or corrupt."""
    if not path.exists():
        return None
    try:
        header, payload = read_header_payload(path)
        if header.get("magic") != _MAGIC:
            raise ValueError("bad magic")
        if header.get("encoder_id") != encoder_id:
            return None  # different encoder wrote here; treat as miss
        if header.get("content_hash") != content_hash:
            return None
        shape = (header["token_rows"], header["token_cols"], header["dim"])
        if shape != (spec.token_rows, spec.token_cols, header["dim"]):
            raise ValueError(f"shape {shape} does not match geometry")
        features = payload.reshape(shape)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        logger.warning("corrupt feature cache entry %s (%s); recomputing", path, exc)
        return None
    return TokenGrid(features=features.copy(), spec=spec, encoder_id=encoder_id)


def extract_batch(
    items: list[tuple[np.ndarray, GeometrySpec]],
    encoder: Encoder,
    cache_dir: str | Path | None = None,
    use_cache: bool = True,
) -> list[TokenGrid]:
    """Extract token grids for preprocessed images, with optional caching.

    Cache hits return bit-identical features and skip the backend entirely;
    corrupt entries are recomputed and rewritten with a warning.
    """
    grids: list[TokenGrid] = []
    caching = use_cache and cache_dir is not None
    for image, spec in items:
        if not caching:
            grids.append(encoder.extract(image, spec))
            continue
        digest = image_content_hash(image)
        path = cache_path(cache_dir, digest, encoder.encoder_id, spec)
        grid = read_cache_entry(path, encoder.encoder_id, spec, digest)
        if grid is None:
            grid = encoder.extract(image, spec)
            write_cache_entry(path, grid, digest)
        grids.append(grid)
    return grids
