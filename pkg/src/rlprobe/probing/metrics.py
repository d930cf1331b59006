"""F1 scores for the two probing tasks."""

from __future__ import annotations

import numpy as np


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if tp == 0 else 2.0 * tp / denom


def binary_f1(predictions, labels) -> float:
    """F1 of the positive class; 0 when precision and recall are both 0."""
    p = np.asarray(predictions).astype(bool)
    y = np.asarray(labels).astype(bool)
    if p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    tp = int(np.count_nonzero(p & y))
    return _f1(tp, int(np.count_nonzero(p & ~y)), int(np.count_nonzero(~p & y)))


def multiclass_weighted_f1(predictions, labels) -> float:
    """Support-weighted mean of one-vs-rest F1 over the classes present in ``labels``."""
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    if y.size == 0:
        return 0.0
    classes, support = np.unique(y, return_counts=True)
    scores = [_f1(int(np.count_nonzero((p == c) & (y == c))),
                  int(np.count_nonzero((p == c) & (y != c))),
                  int(np.count_nonzero((p != c) & (y == c)))) for c in classes]
    return float(np.dot(support, scores) / y.size)
