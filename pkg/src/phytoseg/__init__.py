"""Zero-shot plant/background segmentation from vision-transformer tokens.

The pipeline: plan and apply the 14 px patch geometry, extract per-patch
features, classify tokens by thresholding their signed projection onto the
first principal component, turn token components into box prompts, refine
with a promptable segmentation backend, and restore the mask to the input
resolution. Evaluation, dataset adapters and a supervised U-Net baseline
round out the experiment harness; the ``phytoseg`` command drives it all.
"""

from .encoders import TokenGrid, create_encoder
from .errors import (
    BackendError,
    DataError,
    PhytosegError,
    PipelineStageError,
    RankError,
    SizingError,
    WeightsNotFoundError,
)
from .geometry import GeometrySpec, apply_geometry, plan_geometry, restore_mask
from .metrics import EvalRecord, iou
from .pca import PcaModel, classify, fit, orient
from .pipeline import SegmentationOptions, SegmentationResult, segment_image
from .refiners import create_refiner

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "DataError",
    "EvalRecord",
    "GeometrySpec",
    "PcaModel",
    "PhytosegError",
    "PipelineStageError",
    "RankError",
    "SegmentationOptions",
    "SegmentationResult",
    "SizingError",
    "TokenGrid",
    "WeightsNotFoundError",
    "apply_geometry",
    "classify",
    "create_encoder",
    "create_refiner",
    "fit",
    "iou",
    "orient",
    "plan_geometry",
    "restore_mask",
    "segment_image",
    "__version__",
]
