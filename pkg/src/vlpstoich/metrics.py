"""AUROC and confusion-derived metrics, with 180-mer as the positive class.

Undefined values (zero denominators, single-class AUROC) are reported as
None and excluded from downstream aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import StoichiometryClass
from .errors import LengthMismatch, OneClassOnly

METRIC_NAMES = ("auroc", "sensitivity", "specificity", "precision", "npv")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    auroc: float | None
    sensitivity: float | None
    specificity: float | None
    precision: float | None
    npv: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _to_targets(values) -> np.ndarray:
    """Normalize a vector of StoichiometryClass or +-1 numbers to +-1 floats."""
    if len(values) and isinstance(values[0], StoichiometryClass):
        return np.array([v.target for v in values], dtype=float)
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isin(arr, (-1.0, 1.0))):
        raise ValueError("labels must be +-1 or StoichiometryClass values")
    return arr


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with half credit for tied scores.

    Computed from average ranks in O(n log n); equals the mean over all
    (positive, negative) pairs of win/tie/loss credit.
    """
    scores = np.asarray(scores, dtype=float)
    y = _to_targets(labels)
    if len(scores) != len(y):
        raise LengthMismatch("scores and labels differ in length")
    n_pos = int((y > 0).sum())
    n_neg = int((y < 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("AUROC needs at least one sample of each class")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1

    rank_sum_pos = ranks[y > 0].sum()
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def confusion(predicted, actual) -> ConfusionCounts:
    """Counts with 180-mer as positive."""
    p = _to_targets(predicted)
    a = _to_targets(actual)
    if len(p) != len(a):
        raise LengthMismatch("predicted and actual differ in length")
    return ConfusionCounts(
        tp=int(((p > 0) & (a > 0)).sum()),
        fp=int(((p > 0) & (a < 0)).sum()),
        tn=int(((p < 0) & (a < 0)).sum()),
        fn=int(((p < 0) & (a > 0)).sum()),
    )


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def report(scores, actual) -> MetricsReport:
    """Full metric report using the score > 0 decision rule.

    AUROC is None when only one class is present; the confusion metrics are
    still reported.
    """
    scores = np.asarray(scores, dtype=float)
    a = _to_targets(actual)
    predicted = np.where(scores > 0, 1.0, -1.0)
    c = confusion(predicted, a)
    try:
        auc = auroc(scores, a)
    except OneClassOnly:
        auc = None
    return MetricsReport(
        auroc=auc,
        sensitivity=_ratio(c.tp, c.tp + c.fn),
        specificity=_ratio(c.tn, c.tn + c.fp),
        precision=_ratio(c.tp, c.tp + c.fp),
        npv=_ratio(c.tn, c.tn + c.fn),
    )


def format_metric(value: float | None) -> str:
    """CSV cell for a possibly-undefined metric (empty cell when undefined)."""
    return "" if value is None else f"{value:.10g}"
