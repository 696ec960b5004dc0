"""Intersection-over-union scoring and result aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class IouResult:
    value: float
    both_empty: bool


def iou(pred: np.ndarray, gt: np.ndarray) -> IouResult:
    """IoU between two binary masks: |A and B| / |A or B|.

    When both masks are empty the union is empty and the ratio undefined; we
    score that case 1.0 (a correct all-background prediction) and flag it so
    downstream reporting can state the convention. Exactly one empty mask
    scores 0.0.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if pred.dtype != bool:
        pred = pred.astype(bool)
    if gt.dtype != bool:
        gt = gt.astype(bool)
    inter = np.count_nonzero(pred & gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return IouResult(value=1.0, both_empty=True)
    return IouResult(value=inter / union, both_empty=False)


@dataclass
class EvalRecord:
    """One scored image; the unit every results table is built from."""

    image_id: str
    dataset: str
    method: str
    iou: float
    mask_input_used: bool = False
    seed: int = 0
    both_empty: bool = False


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    n: int


def aggregate(values) -> Summary:
    """Mean and population standard deviation of a score list."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot aggregate zero scores")
    return Summary(mean=float(arr.mean()), std=float(arr.std()), n=int(arr.size))


def summarize(records: list[EvalRecord], by: tuple[str, ...] = ("method", "dataset")):
    """Group records by the given attributes and aggregate each group.

    Returns a dict mapping the grouping key tuple to a Summary, with keys in
    sorted order so tables render deterministically.
    """
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        key = tuple(getattr(rec, attr) for attr in by)
        groups.setdefault(key, []).append(rec.iou)
    return {key: aggregate(vals) for key, vals in sorted(groups.items())}


@dataclass
class CrossEvalTable:
    """Methods-by-datasets summary matrix."""

    methods: list[str]
    datasets: list[str]
    cells: dict[tuple[str, str], Summary] = field(default_factory=dict)

    def get(self, method: str, dataset: str) -> Summary | None:
        return self.cells.get((method, dataset))


def cross_eval(records: list[EvalRecord]) -> CrossEvalTable:
    summaries = summarize(records, by=("method", "dataset"))
    methods = sorted({m for m, _ in summaries})
    datasets = sorted({d for _, d in summaries})
    return CrossEvalTable(methods=methods, datasets=datasets, cells=dict(summaries))
