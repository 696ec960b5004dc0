"""Promptable mask refinement backends.

``sam2`` wraps a promptable segmentation model driven by box prompts (and
optionally the 256x256 coarse mask); ``trivial`` rasterizes exactly
box-intersect-upsampled-coarse-mask so the full pipeline can run and be
verified without model weights. The refiner runs once per box prompt and
the per-prompt masks are unioned into one padded-resolution raster.
"""

from __future__ import annotations

import numpy as np

from .errors import BackendError, SizingError, WeightsNotFoundError
from .geometry import GeometrySpec, _nearest_resample
from .maskops import COARSE_SIZE, BoxPrompt, CoarseMask, union_masks

REFINER_IDS = ("sam2", "trivial")

# signed confidence magnitude used when feeding the binary coarse mask to a
# logit-based refiner
DEFAULT_MASK_LOGIT = 6.0


class Refiner:
    refiner_id: str = ""

    def __init__(self):
        self.calls = 0

    def refine_box(
        self,
        image: np.ndarray,
        spec: GeometrySpec,
        box: BoxPrompt,
        coarse: CoarseMask | None,
    ) -> np.ndarray:
        raise NotImplementedError


class TrivialRefiner(Refiner):
    """Box rectangle intersected with the upsampled coarse mask (if given)."""

    refiner_id = "trivial"

    def refine_box(self, image, spec, box, coarse):
        self.calls += 1
        out = np.zeros((spec.padded_h, spec.padded_w), dtype=bool)
        out[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1] = True
        if coarse is not None:
            up = _nearest_resample(coarse.values, spec.padded_h, spec.padded_w)
            out &= up
        return out


class Sam2Refiner(Refiner):
    """Promptable segmentation backend (SAM2 weights, local checkpoint).

    Each box prompt triggers one prediction; when a coarse mask is supplied
    it is converted to a signed logit map (+m inside, -m outside) and passed
    as the mask prompt. Among the candidate masks returned per prompt, the
    highest-scoring one is kept; that choice is recorded in run metadata by
    the caller.
    """

    refiner_id = "sam2"

    def __init__(
        self,
        checkpoint: str | None,
        model_config: str | None = None,
        device: str = "cpu",
        mask_logit: float = DEFAULT_MASK_LOGIT,
    ):
        super().__init__()
        if not checkpoint:
            raise WeightsNotFoundError(
                "no checkpoint configured for refiner 'sam2'; set "
                "refiners.sam2.checkpoint in the config file or the "
                "PHYTOSEG_SAM2_CHECKPOINT environment variable"
            )
        self.checkpoint = str(checkpoint)
        self.model_config = model_config
        self.device = device
        self.mask_logit = float(mask_logit)
        self._predictor = None
        self._image_key = None

    def _load(self):
        if self._predictor is not None:
            return
        import os

        if not os.path.exists(self.checkpoint):
            raise WeightsNotFoundError(
                f"refiner 'sam2' checkpoint not found at '{self.checkpoint}'"
            )
        try:
            from sam2.build_sam import build_sam2
            from sam2.sam2_image_predictor import SAM2ImagePredictor
        except ImportError as exc:  # pragma: no cover - optional heavy dep
            raise BackendError(
                "refiner 'sam2' needs the 'sam2' package; install it from the "
                "segment-anything-2 distribution"
            ) from exc
        model = build_sam2(self.model_config, self.checkpoint, device=self.device)
        self._predictor = SAM2ImagePredictor(model)

    def refine_box(self, image, spec, box, coarse):  # pragma: no cover - needs weights
        self._load()
        self.calls += 1
        key = id(image)
        if key != self._image_key:
            self._predictor.set_image(image)
            self._image_key = key
        mask_input = None
        if coarse is not None:
            logits = np.where(coarse.values, self.mask_logit, -self.mask_logit)
            mask_input = logits.astype(np.float32)[None]
        masks, scores, _ = self._predictor.predict(
            box=box.as_array()[None].astype(np.float32),
            mask_input=mask_input,
            multimask_output=True,
        )
        best = int(np.argmax(scores))
        out = masks[best].astype(bool)
        if out.shape != (spec.padded_h, spec.padded_w):
            raise BackendError(
                f"refiner returned mask of shape {out.shape}, expected "
                f"{(spec.padded_h, spec.padded_w)}"
            )
        return out


def refine(
    image: np.ndarray,
    spec: GeometrySpec,
    prompts: list[BoxPrompt],
    coarse: CoarseMask | None,
    backend: Refiner,
) -> np.ndarray:
    """Run the backend once per box prompt and union the per-prompt masks.

    An empty prompt list is a defined degenerate case: the result is the
    all-false raster at padded resolution.
    """
    shape = (spec.padded_h, spec.padded_w)
    for p in prompts:
        if p.x_max >= spec.resized_w or p.y_max >= spec.resized_h:
            raise SizingError(f"prompt {p} extends into the padding region")
    if coarse is not None and coarse.values.shape != (COARSE_SIZE, COARSE_SIZE):
        raise SizingError("coarse mask has the wrong shape")
    if not prompts:
        return np.zeros(shape, dtype=bool)
    per_box = [backend.refine_box(image, spec, p, coarse) for p in prompts]
    return union_masks(per_box, shape)


def create_refiner(backend_id: str, settings: dict | None = None) -> Refiner:
    settings = settings or {}
    if backend_id == "trivial":
        return TrivialRefiner()
    if backend_id == "sam2":
        return Sam2Refiner(
            checkpoint=settings.get("checkpoint"),
            model_config=settings.get("model_config"),
            device=str(settings.get("device", "cpu")),
            mask_logit=float(settings.get("mask_logit", DEFAULT_MASK_LOGIT)),
        )
    raise BackendError(
        f"unknown refiner backend '{backend_id}'; expected one of {REFINER_IDS}"
    )
