#!/usr/bin/env python3
"""
Challenge Metrics - confusion matrices, macro-F1 and Expected Cost
Metric values are fractions in [0, 1]; percent formatting belongs to the console layer.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Tuple

import numpy as np

from fedsurg.errors import ValidationError

logger = logging.getLogger(__name__)

# Zero-denominator conventions for per-class F1
F1_ZERO = "zero"
F1_EXCLUDE_ABSENT = "exclude-absent"
F1_CONVENTIONS = (F1_ZERO, F1_EXCLUDE_ABSENT)

DEFAULT_NUM_CLASSES = 6


@dataclass(frozen=True)
class LabelSpace:
    """Ordinal class indices 0..C-1"""

    num_classes: int = DEFAULT_NUM_CLASSES

    def __post_init__(self):
        if int(self.num_classes) != self.num_classes or self.num_classes < 2:
            raise ValidationError(f"num_classes must be an integer >= 2, got {self.num_classes}")

    def contains(self, index) -> bool:
        return 0 <= index < self.num_classes


@dataclass(frozen=True)
class ConfusionMatrix:
    """
    C x C count matrix; entry (i, j) counts samples of true class i predicted as j
    """

    labels: LabelSpace
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        c = self.labels.num_classes
        if counts.shape != (c, c):
            raise ValidationError(f"confusion matrix must be {c}x{c}, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValidationError("confusion matrix counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self) -> int:
        return self.labels.num_classes

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def true_positives(self) -> np.ndarray:
        return np.diag(self.counts).astype(np.int64)

    @property
    def false_positives(self) -> np.ndarray:
        # column sums minus the diagonal
        return self.counts.sum(axis=0) - self.true_positives

    @property
    def false_negatives(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.true_positives

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class MetricReport:
    """Bundle of the per-class F1, macro-F1 and Expected Cost of one evaluation"""

    f1_per_class: Tuple[float, ...]
    f1_macro: float
    expected_cost: float
    support: Tuple[int, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "f1_per_class": list(self.f1_per_class),
            "f1_macro": self.f1_macro,
            "expected_cost": self.expected_cost,
            "support": list(self.support),
        }


def _as_label_array(values: Iterable, name: str) -> np.ndarray:
    arr = np.asarray(list(values))
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise ValidationError(f"{name} must contain integer class indices")
        arr = as_int
    return arr.astype(np.int64)


def build_confusion_matrix(truths: Sequence[int], preds: Sequence[int], labels: LabelSpace) -> ConfusionMatrix:
    """
    Tally true/predicted class pairs into a confusion matrix

    Args:
        truths: True class index per sample
        preds: Predicted class index per sample
        labels: Label space of both sequences

    Returns:
        ConfusionMatrix with counts(i, j) = |{k : truths[k] = i and preds[k] = j}|
    """
    t = _as_label_array(truths, "truths")
    p = _as_label_array(preds, "preds")
    if t.shape[0] != p.shape[0]:
        raise ValidationError(f"length mismatch: {t.shape[0]} truths vs {p.shape[0]} predictions")

    c = labels.num_classes
    for name, arr in (("truths", t), ("preds", p)):
        bad = np.flatnonzero((arr < 0) | (arr >= c))
        if bad.size:
            pos = int(bad[0])
            raise ValidationError(
                f"{name}[{pos}] = {int(arr[pos])} is outside the label range 0..{c - 1}"
            )

    counts = np.bincount(t * c + p, minlength=c * c).reshape(c, c)
    return ConfusionMatrix(labels=labels, counts=counts)


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """
    F1_c = 2 TP_c / (2 TP_c + FP_c + FN_c); classes with a zero denominator score 0
    """
    tp = cm.true_positives.astype(np.float64)
    denom = 2.0 * tp + cm.false_positives + cm.false_negatives
    f1 = np.zeros(cm.num_classes, dtype=np.float64)
    present = denom > 0
    f1[present] = 2.0 * tp[present] / denom[present]
    return f1


def absent_classes(cm: ConfusionMatrix) -> np.ndarray:
    """Boolean mask of classes missing from both truths and predictions"""
    denom = 2 * cm.true_positives + cm.false_positives + cm.false_negatives
    return denom == 0


def macro_f1(cm: ConfusionMatrix, absent_convention: str = F1_ZERO) -> float:
    """
    Unweighted mean of per-class F1

    Args:
        cm: Confusion matrix
        absent_convention: "zero" averages absent classes in as 0,
            "exclude-absent" leaves them out of the mean

    Returns:
        Macro-F1 in [0, 1]; 0.0 when no class is present at all
    """
    if absent_convention not in F1_CONVENTIONS:
        raise ValidationError(
            f"unknown F1 absent-class convention '{absent_convention}' (expected one of {F1_CONVENTIONS})"
        )
    f1 = per_class_f1(cm)
    if absent_convention == F1_ZERO:
        return float(f1.mean())
    keep = ~absent_classes(cm)
    if not keep.any():
        return 0.0
    return float(f1[keep].mean())


def cost_matrix(num_classes: int) -> np.ndarray:
    """Linear ordinal weights w(i, j) = |i - j| / (C - 1)"""
    idx = np.arange(num_classes)
    return np.abs(idx[:, None] - idx[None, :]) / (num_classes - 1)


def expected_cost(cm: ConfusionMatrix) -> float:
    """
    EC = (1/N) sum_ij M_ij |i - j| / (C - 1)

    Raises:
        ValidationError: if the matrix holds no samples
    """
    n = cm.total
    if n == 0:
        raise ValidationError("empty confusion matrix: expected cost is undefined")
    weighted = float((cm.counts * cost_matrix(cm.num_classes)).sum())
    return min(1.0, max(0.0, weighted / n))


def metric_report(cm: ConfusionMatrix, absent_convention: str = F1_ZERO) -> MetricReport:
    """Compute every challenge metric for one confusion matrix"""
    ec = expected_cost(cm)
    return MetricReport(
        f1_per_class=tuple(float(v) for v in per_class_f1(cm)),
        f1_macro=macro_f1(cm, absent_convention),
        expected_cost=ec,
        support=tuple(int(v) for v in cm.support),
    )


def average_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """
    Arithmetic mean of several reports (Task 2 "Average" row)

    Per-class F1 and both headline metrics are averaged; support is summed.
    """
    if not reports:
        raise ValidationError("cannot average an empty list of metric reports")
    per_class = np.mean([r.f1_per_class for r in reports], axis=0)
    support = np.sum([r.support for r in reports], axis=0)
    return MetricReport(
        f1_per_class=tuple(float(v) for v in per_class),
        f1_macro=float(np.mean([r.f1_macro for r in reports])),
        expected_cost=float(np.mean([r.expected_cost for r in reports])),
        support=tuple(int(v) for v in support),
    )


def evaluate_predictions(truths, preds, labels: LabelSpace, absent_convention: str = F1_ZERO) -> MetricReport:
    """Shortcut: build the confusion matrix and report on it"""
    return metric_report(build_confusion_matrix(truths, preds, labels), absent_convention)
