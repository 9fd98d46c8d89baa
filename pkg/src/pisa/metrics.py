"""Evaluation statistics: ROC/AUC with ties, average precision, and the
DeLong z-test for two correlated ROC curves.

All functions are pure; scores/labels come in as parallel sequences with
labels in {0, 1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricError


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def _split(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores, labels = _validate(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise MetricError("AUC undefined: both classes must be present")
    return pos, neg


def _win_counts(x: np.ndarray, ref_sorted: np.ndarray) -> np.ndarray:
    """Per x: count of ref entries strictly below, plus half the ties."""
    lo = np.searchsorted(ref_sorted, x, side="left")
    hi = np.searchsorted(ref_sorted, x, side="right")
    return lo + 0.5 * (hi - lo)


def _placement_values(x: np.ndarray, ref_sorted: np.ndarray) -> np.ndarray:
    return _win_counts(x, ref_sorted) / len(ref_sorted)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie).

    The win counts are integers-plus-halves summed exactly in float64, so
    the result is bitwise equal to the O(m*n) pairwise definition.
    """
    pos, neg = _split(scores, labels)
    wins = _win_counts(pos, np.sort(neg))
    return float(wins.sum() / (len(pos) * len(neg)))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) at each distinct score, descending.

    Starts at (0, 0) with threshold +inf and ends at (1, 1); trapezoidal
    area under the points equals auc() to within 1e-12.
    """
    pos, neg = _split(scores, labels)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    distinct = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([distinct, [len(s) - 1]])
    tp = np.cumsum(y)[idx]
    fp = (idx + 1) - tp
    tpr = np.concatenate([[0.0], tp / len(pos)])
    fpr = np.concatenate([[0.0], fp / len(neg)])
    thresholds = np.concatenate([[np.inf], s[idx]])
    return fpr, tpr, thresholds


def trapezoid_area(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.trapezoid(tpr, fpr))


def average_precision(scores, labels) -> float:
    """Mean of precision@k over the ranks k that hold positives.

    Descending score order; ties broken by ascending original index so the
    value is deterministic.
    """
    scores, labels = _validate(scores, labels)
    m = int(labels.sum())
    if m == 0:
        raise MetricError("average precision undefined without positives")
    order = np.argsort(-scores, kind="mergesort")
    y = labels[order]
    ranks = np.arange(1, len(y) + 1)
    precision_at = np.cumsum(y) / ranks
    return float(precision_at[y == 1].sum() / m)


@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    variance: float
    z: float
    p_value: float


def _components(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-positive (V10) and per-negative (V01) structural components."""
    pos, neg = _split(scores, labels)
    v10 = _placement_values(pos, np.sort(neg))
    v01 = 1.0 - _placement_values(neg, np.sort(pos))
    return v10, v01


def delong_test(scores_a, scores_b, labels) -> DeLongResult:
    """Two-sided test of AUC_a = AUC_b for correlated score vectors.

    The variance of the AUC difference comes from the 2x2 sample
    covariances (divisor m-1 / n-1) of the paired structural components;
    a single positive or negative makes that estimator degenerate.
    """
    scores_a = np.asarray(scores_a, dtype=np.float64)
    scores_b = np.asarray(scores_b, dtype=np.float64)
    if scores_a.shape != scores_b.shape:
        raise ValueError("score vectors must have the same length")
    if np.array_equal(scores_a, scores_b):
        # identical curves short-circuit before any covariance estimate
        a = auc(scores_a, labels)
        return DeLongResult(a, a, 0.0, 0.0, 1.0)
    v10_a, v01_a = _components(scores_a, labels)
    v10_b, v01_b = _components(scores_b, labels)
    auc_a = float(v10_a.mean())
    auc_b = float(v10_b.mean())
    m, n = len(v10_a), len(v01_a)
    if m < 2 or n < 2:
        raise MetricError("DeLong variance is degenerate with a single "
                          "positive or negative sample")
    s10 = np.cov(np.stack([v10_a, v10_b]), ddof=1)
    s01 = np.cov(np.stack([v01_a, v01_b]), ddof=1)
    variance = float((s10[0, 0] + s10[1, 1] - 2.0 * s10[0, 1]) / m
                     + (s01[0, 0] + s01[1, 1] - 2.0 * s01[0, 1]) / n)
    variance = max(variance, 0.0)  # clamp -0.0 style rounding
    diff = auc_a - auc_b
    if variance == 0.0:
        if diff == 0.0:
            return DeLongResult(auc_a, auc_b, 0.0, 0.0, 1.0)
        raise MetricError("DeLong variance is zero but the AUCs differ")
    z = diff / math.sqrt(variance)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return DeLongResult(auc_a, auc_b, variance, z, min(p, 1.0))
