"""Token-feature encoders behind one interface.

Three backends share the ``extract`` contract: ``plantnet-dinov2`` (a
plant-classification fine-tune of a DinoV2 vision transformer),
``dinov2-base`` (the generalist weights), and ``synthetic`` (a deterministic
two-cluster generator that makes the whole pipeline testable without model
weights). All of them emit per-patch output tokens for a preprocessed image
whose dims are multiples of the 14 px patch; the class token (and register
tokens, when present) are excluded.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, SizingError, WeightsNotFoundError
from .geometry import PATCH_SIZE, GeometrySpec, compute_pad_mask

ENCODER_IDS = ("plantnet-dinov2", "dinov2-base", "synthetic")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class TokenGrid:
    """Row-major grid of patch token features tied to its GeometrySpec."""

    features: np.ndarray  # (token_rows, token_cols, dim) float32
    spec: GeometrySpec
    encoder_id: str
    pad_mask: np.ndarray = field(default=None)  # (token_rows, token_cols) bool

    def __post_init__(self):
        if self.pad_mask is None:
            self.pad_mask = compute_pad_mask(self.spec)
        expected = (self.spec.token_rows, self.spec.token_cols)
        if self.features.shape[:2] != expected:
            raise SizingError(
                f"feature grid {self.features.shape[:2]} does not match token grid {expected}"
            )
        if not np.isfinite(self.features).all():
            raise BackendError("encoder produced non-finite feature values")

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    def content_features(self) -> np.ndarray:
        """Flat (n, dim) view of the tokens whose blocks touch content."""
        return self.features[~self.pad_mask]


def _check_preprocessed(image: np.ndarray, spec: GeometrySpec) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise SizingError(f"expected an RGB raster, got shape {image.shape}")
    if image.shape[:2] != (spec.padded_h, spec.padded_w):
        raise SizingError(
            f"image is {image.shape[:2]}, spec expects padded "
            f"{(spec.padded_h, spec.padded_w)}"
        )
    if image.shape[0] % PATCH_SIZE or image.shape[1] % PATCH_SIZE:
        raise SizingError(
            f"padded dims {image.shape[:2]} are not multiples of {PATCH_SIZE}"
        )
    return image


def image_content_hash(image: np.ndarray) -> str:
    image = np.ascontiguousarray(np.asarray(image, dtype=np.uint8))
    h = hashlib.sha256()
    h.update(str(image.shape).encode())
    h.update(image.tobytes())
    return h.hexdigest()


def block_mean_exg(image: np.ndarray, patch: int = PATCH_SIZE) -> np.ndarray:
    """Per-token mean excess green (2G - R - B) over each patch block."""
    img = np.asarray(image, dtype=np.float64)
    exg = 2.0 * img[..., 1] - img[..., 0] - img[..., 2]
    rows = exg.shape[0] // patch
    cols = exg.shape[1] // patch
    return exg.reshape(rows, patch, cols, patch).mean(axis=(1, 3))


class Encoder:
    """Backend base: validates inputs, counts calls, assembles TokenGrids."""

    encoder_id: str = ""

    def __init__(self):
        self.calls = 0

    def extract(self, image: np.ndarray, spec: GeometrySpec) -> TokenGrid:
        image = _check_preprocessed(image, spec)
        self.calls += 1
        feats = self._features(image, spec).astype(np.float32, copy=False)
        return TokenGrid(features=feats, spec=spec, encoder_id=self.encoder_id)

    def _features(self, image: np.ndarray, spec: GeometrySpec) -> np.ndarray:
        raise NotImplementedError


class SyntheticEncoder(Encoder):
    """Deterministic two-cluster feature generator for desk-scale tests.

    The input is read as a two-color label image: tokens whose block mean
    excess green clears ``exg_threshold`` belong to the plant cluster, the
    rest to background. Features are drawn from two isotropic Gaussians of
    unit sigma whose means sit 6 sigma apart along coordinate 0, with the
    plant cluster on the positive side. The draw is seeded from (seed,
    image content hash), so the same image always yields bit-identical
    grids while different images or seeds decorrelate.
    """

    encoder_id = "synthetic"

    def __init__(self, dim: int = 64, seed: int = 0, exg_threshold: float = 30.0):
        super().__init__()
        if dim < 1:
            raise BackendError("synthetic encoder needs dim >= 1")
        self.dim = dim
        self.seed = seed
        self.exg_threshold = exg_threshold

    def token_labels(self, image: np.ndarray, spec: GeometrySpec) -> np.ndarray:
        """Ground-truth token classes implied by the label image."""
        _check_preprocessed(image, spec)
        return block_mean_exg(image) >= self.exg_threshold

    def _features(self, image: np.ndarray, spec: GeometrySpec) -> np.ndarray:
        labels = block_mean_exg(image) >= self.exg_threshold
        digest = image_content_hash(image)
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, int(digest[:16], 16)])
        )
        rows, cols = labels.shape
        feats = rng.standard_normal((rows, cols, self.dim))
        feats[..., 0] += np.where(labels, 3.0, -3.0)
        return feats


class Dinov2Encoder(Encoder):
    """DinoV2-family transformer backend loaded from a local checkpoint.

    Accepts any DinoV2-family checkpoint directory readable by
    ``transformers.AutoModel``; positional embeddings are interpolated by
    the model itself, so any grid of 14 px patches is accepted. The
    checkpoint id actually loaded is recorded on the instance.
    """

    def __init__(self, encoder_id: str, checkpoint: str | None, device: str = "cpu"):
        super().__init__()
        self.encoder_id = encoder_id
        self.device = device
        if not checkpoint:
            raise WeightsNotFoundError(
                f"no checkpoint configured for encoder '{encoder_id}'; set "
                f"encoders.{encoder_id}.checkpoint in the config file or the "
                f"PHYTOSEG_{encoder_id.upper().replace('-', '_')}_CHECKPOINT "
                "environment variable to a local model directory"
            )
        self.checkpoint = str(checkpoint)
        self._model = None
        self._torch = None

    def _load(self):
        if self._model is not None:
            return
        import os

        if not os.path.exists(self.checkpoint):
            raise WeightsNotFoundError(
                f"encoder '{self.encoder_id}' checkpoint not found at "
                f"'{self.checkpoint}'"
            )
        try:
            import torch
            from transformers import AutoModel
        except ImportError as exc:  # pragma: no cover - depends on extras
            raise BackendError(
                f"encoder '{self.encoder_id}' needs the 'transformers' package "
                "(pip install phytoseg[vit])"
            ) from exc
        try:
            model = AutoModel.from_pretrained(self.checkpoint, local_files_only=True)
        except Exception as exc:
            raise WeightsNotFoundError(
                f"failed to load encoder '{self.encoder_id}' from "
                f"'{self.checkpoint}': {exc}"
            ) from exc
        self._torch = torch
        self._model = model.to(self.device).eval()

    def _features(self, image: np.ndarray, spec: GeometrySpec) -> np.ndarray:
        self._load()
        torch = self._torch
        arr = image.astype(np.float32) / 255.0
        arr = (arr - np.array(IMAGENET_MEAN, dtype=np.float32)) / np.array(
            IMAGENET_STD, dtype=np.float32
        )
        pixels = torch.from_numpy(arr.transpose(2, 0, 1)[None]).to(self.device)
        with torch.no_grad():
            out = self._model(pixel_values=pixels)
        tokens = out.last_hidden_state[0].cpu().numpy()
        rows, cols = spec.token_rows, spec.token_cols
        n_special = tokens.shape[0] - rows * cols
        if n_special < 0:
            raise BackendError(
                f"encoder '{self.encoder_id}' returned {tokens.shape[0]} tokens "
                f"for a {rows}x{cols} grid"
            )
        return tokens[n_special:].reshape(rows, cols, -1)


def create_encoder(backend_id: str, settings: dict | None = None) -> Encoder:
    """Instantiate an encoder backend from its id and settings mapping."""
    settings = settings or {}
    if backend_id == "synthetic":
        return SyntheticEncoder(
            dim=int(settings.get("dim", 64)),
            seed=int(settings.get("seed", 0)),
            exg_threshold=float(settings.get("exg_threshold", 30.0)),
        )
    if backend_id in ("plantnet-dinov2", "dinov2-base"):
        return Dinov2Encoder(
            backend_id,
            checkpoint=settings.get("checkpoint"),
            device=str(settings.get("device", "cpu")),
        )
    raise BackendError(
        f"unknown encoder backend '{backend_id}'; expected one of {ENCODER_IDS}"
    )
