"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors exit 2,
backend/weights errors exit 3.
"""

from __future__ import annotations


class PhytosegError(Exception):
    """Base class for all package errors."""


class SizingError(PhytosegError):
    """Image or mask dimensions violate a geometric precondition."""


class DataError(PhytosegError):
    """Dataset layout, file pairing, or mask content is invalid."""


class BackendError(PhytosegError):
    """An encoder or refiner backend cannot be constructed or run."""


class WeightsNotFoundError(BackendError):
    """Model weights are missing; the message names the expected location."""


class RankError(PhytosegError):
    """Feature matrix is degenerate (no variance to decompose)."""


class PipelineStageError(PhytosegError):
    """Wraps a failure inside the per-image pipeline with its stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3
