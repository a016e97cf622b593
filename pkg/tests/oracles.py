"""Brute-force reference implementations used by the tests."""
import numpy as np


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def sweep_f1(scores, labels):
    """F1 at every distinct threshold, as {tau: f1}."""
    scores, labels = np.asarray(scores), np.asarray(labels)
    out = {}
    for tau in np.unique(scores):
        pred = scores >= tau
        tp = np.sum(pred & (labels == 1))
        out[float(tau)] = 2 * tp / (pred.sum() + labels.sum())
    return out
