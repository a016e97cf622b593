"""Ranking and regression metrics.

Ties are handled as blocks: AUC-ROC gives half credit to tied
positive/negative pairs, and the precision-recall and F1 sweeps move the
threshold one distinct score value at a time. Average precision is the
step-wise (non-interpolated) sum.
"""
import csv

import numpy as np

from .exceptions import DataError


def _as_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise DataError(f"{len(scores)} scores but {len(labels)} labels")
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise DataError("labels must be 0 or 1")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")
    return scores, labels


def _threshold_blocks(scores, labels):
    """Cumulative (TP, FP) after each distinct score, highest score first."""
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1.0 - y)
    # last index of every run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    return s[ends], tp[ends], fp[ends]


def _midranks(x):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    starts = np.r_[0, np.flatnonzero(np.diff(xs) != 0) + 1]
    ends = np.r_[starts[1:], len(xs)]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + b + 1)
    return ranks


def auc_roc(scores, labels):
    """Probability that a random positive outscores a random negative."""
    scores, labels = _as_binary(scores, labels)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC-ROC needs both classes present")
    rank_sum = _midranks(scores)[labels == 1.0].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_points(scores, labels):
    """(FPR, TPR) at every distinct threshold, from (0, 0) to (1, 1)."""
    scores, labels = _as_binary(scores, labels)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC curve needs both classes present")
    _, tp, fp = _threshold_blocks(scores, labels)
    return list(zip(np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]))


def pr_points(scores, labels):
    """(recall, precision) at every distinct threshold, highest first."""
    scores, labels = _as_binary(scores, labels)
    if labels.sum() == 0:
        raise DataError("precision-recall needs at least one positive")
    _, tp, fp = _threshold_blocks(scores, labels)
    return list(zip(tp / labels.sum(), tp / (tp + fp)))


def auc_pr(scores, labels):
    """Average precision: sum of precision times recall increment."""
    pts = pr_points(scores, labels)
    recall = np.array([p[0] for p in pts])
    precision = np.array([p[1] for p in pts])
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def max_f1(scores, labels):
    """Best F1 over thresholds ``score >= tau`` and the smallest such tau."""
    scores, labels = _as_binary(scores, labels)
    n_pos = labels.sum()
    if n_pos == 0:
        raise DataError("F1 needs at least one positive")
    taus, tp, fp = _threshold_blocks(scores, labels)
    f1 = 2.0 * tp / (tp + fp + n_pos)
    best = f1.max()
    # taus descend, so the last maximizer is the smallest threshold
    i = np.flatnonzero(f1 == best)[-1]
    return float(best), float(taus[i])


def f1_at(scores, labels, tau):
    scores, labels = _as_binary(scores, labels)
    pred = scores >= tau
    tp = np.sum(pred & (labels == 1.0))
    denom = pred.sum() + labels.sum()
    return float(2.0 * tp / denom) if denom else 0.0


def accuracy(scores, labels, cut=0.5):
    scores, labels = _as_binary(scores, labels)
    return float(np.mean((scores >= cut) == (labels == 1.0)))


def r2(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape:
        raise DataError(f"{len(pred)} predictions but {len(actual)} targets")
    if len(actual) < 2:
        raise DataError("R^2 needs at least two points")
    ss_tot = np.sum((actual - actual.mean()) ** 2)
    if ss_tot == 0:
        raise DataError("R^2 undefined for constant targets")
    return float(1.0 - np.sum((actual - pred) ** 2) / ss_tot)


def trapezoid_area(points):
    xy = np.asarray(points, dtype=np.float64)
    return float(np.sum(np.diff(xy[:, 0]) * (xy[1:, 1] + xy[:-1, 1]) / 2.0))


def write_curve_csv(path, points, header=("x", "y")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in points:
            w.writerow([repr(float(x)), repr(float(y))])
