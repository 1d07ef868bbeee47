"""
Evaluation Metrics
Confusion matrices, per-class IoU, mIoU, global accuracy and PSNR.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from waveseg.config import IGNORE_LABEL
from waveseg.errors import ArgumentError, ShapeError, UndefinedMetricError
from waveseg.tensor import as_array


class ConfusionMatrix:
    """
    K x K pixel counts; entry [i, j] counts ground truth i predicted as j.
    """

    def __init__(self, num_classes: int, counts: Optional[np.ndarray] = None):
        if num_classes < 1:
            raise ArgumentError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = num_classes
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        counts = np.array(counts, dtype=np.int64)
        if counts.shape != (num_classes, num_classes):
            raise ShapeError(f"counts must be {num_classes}x{num_classes}, got {counts.shape}")
        if np.any(counts < 0):
            raise ArgumentError("confusion counts must be nonnegative")
        self.counts = counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def update(self, truth, pred, ignore_label: int = IGNORE_LABEL) -> "ConfusionMatrix":
        """Add one batch of label maps in place."""
        truth = np.asarray(truth)
        pred = np.asarray(pred)
        if truth.shape != pred.shape:
            raise ShapeError(f"truth {truth.shape} and prediction {pred.shape} differ in shape")
        keep = truth != ignore_label
        t = truth[keep].astype(np.int64)
        p = pred[keep].astype(np.int64)
        K = self.num_classes
        for name, labels in (("truth", t), ("prediction", p)):
            if labels.size and (labels.min() < 0 or labels.max() >= K):
                raise ArgumentError(f"{name} labels must lie in [0, {K})")
        self.counts += np.bincount(t * K + p, minlength=K * K).reshape(K, K)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ShapeError(f"cannot merge {self.num_classes}- and {other.num_classes}-class matrices")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    __add__ = merge

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"ConfusionMatrix({self.counts.tolist()})"

    def row_normalized(self) -> np.ndarray:
        """Percent of each ground-truth row; empty rows stay 0."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(100.0 * self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_frame(self, class_names: Optional[Sequence[str]] = None, normalized: bool = False) -> pd.DataFrame:
        """Rows are ground truth, columns predictions; `normalized` gives row percents."""
        names = list(class_names) if class_names else [str(k) for k in range(self.num_classes)]
        values = self.row_normalized() if normalized else self.counts
        frame = pd.DataFrame(values, index=names, columns=names)
        frame.index.name = "truth"
        return frame


def accumulate(cm: ConfusionMatrix, truth_mask, pred_mask, ignore_label: int = IGNORE_LABEL) -> ConfusionMatrix:
    """New matrix equal to cm plus the counts of one pair of label maps."""
    return ConfusionMatrix(cm.num_classes, cm.counts).update(truth_mask, pred_mask, ignore_label)


def class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class; NaN where a class is absent from truth and prediction."""
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - tp
    return np.divide(tp, union, out=np.full(tp.shape, np.nan), where=union > 0)


def miou(cm: ConfusionMatrix) -> Tuple[float, np.ndarray]:
    """
    Mean IoU over classes with a nonempty union, plus the per-class vector.
    """
    ious = class_iou(cm)
    present = ~np.isnan(ious)
    if not present.any():
        raise UndefinedMetricError("mIoU is undefined: every class has an empty union")
    return float(np.mean(ious[present])), ious


def global_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise UndefinedMetricError("global accuracy is undefined for an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def class_accuracy(cm: ConfusionMatrix) -> np.ndarray:
    """Recall of each ground-truth class; NaN for classes never in the truth."""
    rows = cm.counts.sum(axis=1).astype(np.float64)
    return np.divide(np.diag(cm.counts), rows, out=np.full(rows.shape, np.nan), where=rows > 0)


def mean_class_accuracy(cm: ConfusionMatrix) -> float:
    acc = class_accuracy(cm)
    if np.all(np.isnan(acc)):
        raise UndefinedMetricError("class accuracy is undefined for an empty confusion matrix")
    return float(np.nanmean(acc))


def psnr(a, b, peak: float = 1.0) -> float:
    """
    Peak signal-to-noise ratio in dB; math.inf for identical inputs.
    """
    if peak <= 0:
        raise ArgumentError(f"peak must be positive, got {peak}")
    x, y = as_array(a), as_array(b)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def format_metric(value: float) -> str:
    """CSV text of a metric value; infinities print as 'inf'."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")
