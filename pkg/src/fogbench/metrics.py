"""Regression metrics for visibility maps and class accuracy for image-wise values."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from fogbench.errors import DomainError, ShapeError
from fogbench.estimate import classify


@dataclass
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    accuracy: float | None
    valid_count: int

    def to_json(self) -> dict:
        return asdict(self)


def regression_metrics(pred, gt, mask=None) -> MetricReport:
    """AbsRel, SqRel, RMSE and RMSElog (base-10 logs) over valid entries.

    ``pred`` and ``gt`` may be maps or flat sequences of image-wise values.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"pred {pred.shape} and gt {gt.shape} differ")
    valid = np.ones(pred.shape, bool) if mask is None else np.asarray(mask, dtype=bool)
    if valid.shape != pred.shape:
        raise ShapeError(f"mask {valid.shape} does not match {pred.shape}")
    p, g = pred[valid], gt[valid]
    if p.size == 0:
        raise ValueError("no valid entries to evaluate")
    if not (g > 0).all():
        raise DomainError("ground truth must be positive at valid entries")
    if not (p > 0).all():
        raise DomainError("predictions must be positive at valid entries for RMSElog")
    rel = (p - g) / g
    return MetricReport(
        abs_rel=float(np.mean(np.abs(rel))),
        sq_rel=float(np.mean(rel * rel)),
        rmse=math.sqrt(float(np.mean((p - g) ** 2))),
        rmse_log=math.sqrt(float(np.mean((np.log10(p) - np.log10(g)) ** 2))),
        accuracy=None,
        valid_count=int(p.size),
    )


def classification_accuracy(pred_vis: Sequence[float], gt_vis: Sequence[float]) -> float:
    """Fraction of images whose predicted visibility lands in the true class."""
    pred_vis, gt_vis = list(pred_vis), list(gt_vis)
    if len(pred_vis) != len(gt_vis):
        raise ShapeError(f"{len(pred_vis)} predictions for {len(gt_vis)} ground truths")
    if not pred_vis:
        raise ValueError("accuracy of an empty list is undefined")
    hits = sum(classify(p) == classify(g) for p, g in zip(pred_vis, gt_vis))
    return hits / len(pred_vis)


def image_report(pred_vis: Sequence[float], gt_vis: Sequence[float]) -> MetricReport:
    """Regression metrics plus class accuracy over image-wise visibilities."""
    report = regression_metrics(pred_vis, gt_vis)
    report.accuracy = classification_accuracy(pred_vis, gt_vis)
    return report
