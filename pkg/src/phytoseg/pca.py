"""Principal-component token classification.

A single PCA is fit over all content tokens of a reference image set.
Each token is then scored by its projection onto the first component and
classified as plant (score >= 0) or background (score < 0). The component
sign is arbitrary after fitting, so an orientation step pins it: token
scores must correlate nonnegatively with mean excess green (2G - R - B)
over each token's pixel block, a label-free vegetation cue.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .encoders import TokenGrid, block_mean_exg
from .errors import RankError
from .geometry import GeometrySpec, compute_pad_mask
from .storage import read_header_payload, write_header_payload

logger = logging.getLogger(__name__)

_MODEL_MAGIC = "phytoseg-pca-v1"

DEFAULT_SUBSAMPLE_CAP = 2_000_000
ORIENTATION_MIN_CORR = 0.05


@dataclass
class PcaModel:
    """Centered PCA basis plus the sign convention used for classification."""

    mean: np.ndarray                # (dim,) float64
    components: np.ndarray          # (k, dim) float64, orthonormal rows
    explained_variance: np.ndarray  # (k,) float64, nonincreasing
    orientation: int                # +1 or -1, applied to component 1 scores
    encoder_id: str
    fit_token_count: int
    subsample_seed: int
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass
class TokenMask:
    """Boolean plant/background decision per token, plus the raw scores."""

    values: np.ndarray  # (rows, cols) bool
    scores: np.ndarray  # (rows, cols) float64, oriented projections
    spec: GeometrySpec


def fit(
    grids: list[TokenGrid],
    k: int = 3,
    subsample_cap: int = DEFAULT_SUBSAMPLE_CAP,
    seed: int = 0,
) -> PcaModel:
    """Fit a centered PCA (no variance scaling) over all content tokens.

    When the pooled token count exceeds ``subsample_cap``, a seeded uniform
    subsample of the cap size is used instead, which keeps memory bounded
    on large image sets. Component 1 maximizes projected variance.
    """
    if not grids:
        raise ValueError("need at least one token grid to fit")
    encoder_ids = {g.encoder_id for g in grids}
    if len(encoder_ids) != 1:
        raise ValueError(f"grids mix encoder ids {sorted(encoder_ids)}")
    encoder_id = encoder_ids.pop()

    blocks = [g.content_features() for g in grids]
    total = sum(b.shape[0] for b in blocks)
    if total < 2:
        raise ValueError(f"need at least 2 content tokens to fit, got {total}")

    tokens = np.concatenate(blocks, axis=0)
    if total > subsample_cap:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(total, size=subsample_cap, replace=False))
        tokens = tokens[idx]
    tokens = tokens.astype(np.float64, copy=False)

    mean = tokens.mean(axis=0)
    centered = tokens - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    explained = (s * s) / tokens.shape[0]

    scale = max(float(np.mean(tokens * tokens)), np.finfo(np.float64).tiny)
    if explained[0] / scale < 1e-12:
        raise RankError("token features are all identical; nothing to decompose")

    k_eff = min(k, vt.shape[0])
    return PcaModel(
        mean=mean,
        components=vt[:k_eff].copy(),
        explained_variance=explained[:k_eff].copy(),
        orientation=1,
        encoder_id=encoder_id,
        fit_token_count=tokens.shape[0],
        subsample_seed=seed,
        meta={"total_tokens": total, "grids": len(grids)},
    )


def orient(
    model: PcaModel,
    grids: list[TokenGrid],
    images: list[np.ndarray],
    flip: bool = False,
) -> PcaModel:
    """Fix the component-1 sign so plant tokens score positive.

    Scores are correlated against per-token mean excess green; the sign is
    chosen to make that correlation nonnegative. A correlation weaker than
    0.05 in magnitude is treated as inconclusive: the orientation stays +1
    and a warning is logged. ``flip`` negates the outcome and is recorded.
    """
    if len(grids) != len(images):
        raise ValueError("grids and images must be aligned")
    projections = []
    greens = []
    for grid, image in zip(grids, images):
        content = ~grid.pad_mask
        feats = grid.features[content].astype(np.float64)
        projections.append((feats - model.mean) @ model.components[0])
        greens.append(block_mean_exg(image)[content])
    proj = np.concatenate(projections)
    exg = np.concatenate(greens)

    corr = 0.0
    if proj.size >= 2 and proj.std() > 0 and exg.std() > 0:
        corr = float(np.corrcoef(proj, exg)[0, 1])
    if abs(corr) < ORIENTATION_MIN_CORR:
        orientation = 1
        logger.warning(
            "orientation heuristic inconclusive (corr=%.4f); leaving +1, "
            "use the flip override if plant/background come out swapped",
            corr,
        )
    else:
        orientation = 1 if corr > 0 else -1
    if flip:
        orientation = -orientation
    meta = dict(model.meta, orientation_corr=corr, manual_flip=bool(flip))
    return replace(model, orientation=orientation, meta=meta)


def classify(grid: TokenGrid, model: PcaModel, threshold: float = 0.0) -> TokenMask:
    """Score every token on oriented component 1 and threshold (inclusive).

    Tokens whose blocks lie entirely in padding are always classified
    background regardless of score.
    """
    if grid.encoder_id != model.encoder_id:
        raise ValueError(
            f"grid encoder '{grid.encoder_id}' does not match model encoder "
            f"'{model.encoder_id}'"
        )
    rows, cols, dim = grid.features.shape
    flat = grid.features.reshape(-1, dim).astype(np.float64)
    scores = model.orientation * ((flat - model.mean) @ model.components[0])
    scores = scores.reshape(rows, cols)
    values = (scores >= threshold) & ~grid.pad_mask
    return TokenMask(values=values, scores=scores, spec=grid.spec)


def score_histogram(masks: list[TokenMask], bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of content-token scores with bin edges symmetric around 0.

    Returns (edges, counts) with ``len(edges) == bins + 1``.
    """
    if not masks:
        raise ValueError("need at least one token mask")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    pooled = np.concatenate(
        [m.scores[~compute_pad_mask(m.spec)].ravel() for m in masks]
    )
    extent = float(np.abs(pooled).max())
    if extent == 0.0:
        extent = 1e-12
    edges = np.linspace(-extent, extent, bins + 1)
    counts, _ = np.histogram(pooled, bins=edges)
    return edges, counts


def save_model(path: str | Path, model: PcaModel) -> None:
    """Serialize a PcaModel as a JSON header plus raw float payload."""
    header = {
        "magic": _MODEL_MAGIC,
        "dim": model.dim,
        "k": model.k,
        "encoder_id": model.encoder_id,
        "orientation": model.orientation,
        "explained_variance": [float(v) for v in model.explained_variance],
        "fit_token_count": model.fit_token_count,
        "subsample_seed": model.subsample_seed,
        "meta": model.meta,
    }
    write_header_payload(path, header, [model.mean, model.components], dtype="<f8")


def load_model(path: str | Path) -> PcaModel:
    header, payload = read_header_payload(path)
    if header.get("magic") != _MODEL_MAGIC:
        raise ValueError(f"{path} is not a PCA model file")
    dim, k = header["dim"], header["k"]
    mean = payload[:dim].astype(np.float64)
    components = payload[dim : dim + k * dim].reshape(k, dim).astype(np.float64)
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=np.array(header["explained_variance"], dtype=np.float64),
        orientation=int(header["orientation"]),
        encoder_id=header["encoder_id"],
        fit_token_count=int(header["fit_token_count"]),
        subsample_seed=int(header["subsample_seed"]),
        meta=header.get("meta", {}),
    )
