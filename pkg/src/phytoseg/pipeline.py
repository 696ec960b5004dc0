"""End-to-end per-image segmentation.

preprocess -> extract tokens -> classify -> group into components ->
build prompts -> refine -> restore to original resolution. Failures are
re-raised tagged with the stage that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import maskops, pca, refiners
from .encoders import Encoder, TokenGrid
from .errors import PhytosegError, PipelineStageError
from .geometry import apply_geometry, plan_geometry, restore_mask
from .pca import PcaModel


@dataclass
class SegmentationOptions:
    use_mask_input: bool = False   # also hand the 256x256 coarse mask to the refiner
    single_box: bool = False       # one global box instead of per-component boxes
    connectivity: int = 8
    min_tokens: int = 1
    threshold: float = 0.0
    max_short_edge: int | None = None  # override the 1036 px cap (e.g. fast mode)
    keep_intermediates: bool = False


@dataclass
class SegmentationResult:
    image_id: str
    mask: np.ndarray               # boolean raster at original resolution
    prompt_count: int
    options: SegmentationOptions
    intermediates: dict = field(default_factory=dict)


def _stage(name: str):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, PipelineStageError):
                raise PipelineStageError(name, exc) from exc
            return False

    return _Ctx()


def segment_image(
    image: np.ndarray,
    model: PcaModel,
    encoder: Encoder,
    refiner: refiners.Refiner,
    options: SegmentationOptions | None = None,
    image_id: str = "image",
    token_grid: TokenGrid | None = None,
) -> SegmentationResult:
    """Segment one RGB image with a fitted PCA model.

    ``token_grid`` short-circuits extraction when features were already
    computed (e.g. through the batch cache); it must match the image.
    """
    options = options or SegmentationOptions()
    image = np.asarray(image)

    with _stage("plan"):
        kwargs = {}
        if options.max_short_edge is not None:
            kwargs["max_short_edge"] = options.max_short_edge
        spec = plan_geometry(image.shape[0], image.shape[1], **kwargs)
    with _stage("preprocess"):
        padded = apply_geometry(image, spec)
    with _stage("extract"):
        if token_grid is None:
            token_grid = encoder.extract(padded, spec)
        elif token_grid.spec != spec:
            raise PhytosegError("provided token grid does not match the image geometry")
    with _stage("classify"):
        token_mask = pca.classify(token_grid, model, threshold=options.threshold)
    with _stage("components"):
        comps = maskops.components(
            token_mask, connectivity=options.connectivity, min_tokens=options.min_tokens
        )
    with _stage("prompts"):
        prompts = maskops.boxes(comps, spec)
        if options.single_box:
            prompts = maskops.merge_boxes(prompts)
        coarse = maskops.coarse_mask(token_mask) if options.use_mask_input else None
    with _stage("refine"):
        refined = refiners.refine(padded, spec, prompts, coarse, refiner)
    with _stage("restore"):
        final = restore_mask(refined, spec)

    result = SegmentationResult(
        image_id=image_id,
        mask=final,
        prompt_count=len(prompts),
        options=options,
    )
    if options.keep_intermediates:
        result.intermediates = {
            "spec": spec,
            "padded": padded,
            "token_grid": token_grid,
            "token_mask": token_mask,
            "components": comps,
            "prompts": prompts,
            "coarse": coarse,
            "refined": refined,
        }
    return result
