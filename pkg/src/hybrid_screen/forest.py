"""Extremely randomized trees used as a feature-ranking engine.

Trees are grown on the full sample (no bootstrap). At each node up to
``k_candidates`` features are drawn without replacement; features that are
constant at the node are skipped and another is drawn in their place. Each
candidate gets a single cutoff drawn uniformly in the open interval between
its node minimum and maximum, and the candidate with the largest impurity
decrease wins. Rows with ``x[f] < cutoff`` go left.

Tree ``i`` is grown from its own generator seeded by
``derive_seed(master_seed, i)``, so a forest is bit-identical whether its
trees are built serially or on a thread pool.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._seeding import derive_seed, make_rng
from .exceptions import DataError, EmptySelectionError

GINI = "gini"
VARIANCE = "variance"

# gains at or below this fraction of the node impurity count as "no decrease"
_MIN_REL_GAIN = 1e-12


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 1000
    k_candidates: int = None
    min_samples_split: int = 2
    impurity_kind: str = GINI
    master_seed: int = 0

    def resolved_k(self, p):
        if self.k_candidates is not None:
            k = int(self.k_candidates)
        elif self.impurity_kind == GINI:
            k = int(round(math.sqrt(p)))
        else:
            k = int(round(p / 3))
        return min(max(k, 1), p)


@dataclass
class Tree:
    """Flat array representation; node 0 is the root, ids are in preorder.

    ``feature`` is -1 at leaves. ``value`` holds class fractions
    (classification) or the mean target (regression), one row per node.
    """

    feature: np.ndarray
    cutoff: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray
    depth: np.ndarray
    value: np.ndarray

    @property
    def node_count(self):
        return len(self.feature)

    @property
    def is_leaf_only(self):
        return self.feature[0] < 0

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.arange(X.shape[0])
        while active.size:
            cur = node[active]
            internal = self.feature[cur] >= 0
            active, cur = active[internal], cur[internal]
            go_left = X[active, self.feature[cur]] < self.cutoff[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def raw_importances(self, n_features):
        """Weighted impurity decrease per feature, not normalized."""
        imp = np.zeros(n_features)
        internal = np.flatnonzero(self.feature >= 0)
        if internal.size == 0:
            return imp
        n_total = self.n_samples[0]
        L, R = self.left[internal], self.right[internal]
        n = self.n_samples[internal].astype(np.float64)
        gain = (n / n_total) * (
            self.impurity[internal]
            - (self.n_samples[L] / n) * self.impurity[L]
            - (self.n_samples[R] / n) * self.impurity[R])
        np.add.at(imp, self.feature[internal], gain)
        return imp


@njit(cache=True, nogil=True)
def _node_impurity(y_codes, y_real, idx, start, end, n_classes, counts):
    n = end - start
    if n_classes > 0:
        counts[:] = 0.0
        for i in range(start, end):
            counts[y_codes[idx[i]]] += 1.0
        s = 0.0
        for c in range(n_classes):
            frac = counts[c] / n
            s += frac * frac
        return 1.0 - s
    mean = 0.0
    for i in range(start, end):
        mean += y_real[idx[i]]
    mean /= n
    var = 0.0
    for i in range(start, end):
        d = y_real[idx[i]] - mean
        var += d * d
    return var / n


@njit(cache=True, nogil=True)
def _split_impurity(X, y_codes, y_real, idx, start, end, f, cut, n_classes,
                    cl, cr):
    """Return (n_left, impurity_left, impurity_right) for x[f] < cut."""
    nl = 0
    if n_classes > 0:
        cl[:] = 0.0
        cr[:] = 0.0
        for i in range(start, end):
            r = idx[i]
            if X[r, f] < cut:
                cl[y_codes[r]] += 1.0
                nl += 1
            else:
                cr[y_codes[r]] += 1.0
        nr = end - start - nl
        sl = 0.0
        sr = 0.0
        for c in range(n_classes):
            sl += (cl[c] / nl) ** 2
            sr += (cr[c] / nr) ** 2
        return nl, 1.0 - sl, 1.0 - sr
    suml = 0.0
    sumr = 0.0
    for i in range(start, end):
        r = idx[i]
        if X[r, f] < cut:
            suml += y_real[r]
            nl += 1
        else:
            sumr += y_real[r]
    nr = end - start - nl
    ml = suml / nl
    mr = sumr / nr
    vl = 0.0
    vr = 0.0
    for i in range(start, end):
        r = idx[i]
        if X[r, f] < cut:
            d = y_real[r] - ml
            vl += d * d
        else:
            d = y_real[r] - mr
            vr += d * d
    return nl, vl / nl, vr / nr


@njit(cache=True, nogil=True)
def _grow(X, y_codes, y_real, n_classes, k_candidates, min_samples_split, rng):
    n, p = X.shape
    max_nodes = 2 * n - 1
    n_out = n_classes if n_classes > 0 else 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    cutoff = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    n_samples = np.zeros(max_nodes, dtype=np.int64)
    impurity = np.zeros(max_nodes)
    depth = np.zeros(max_nodes, dtype=np.int64)
    value = np.zeros((max_nodes, n_out))

    idx = np.arange(n)
    pool = np.arange(p)
    counts = np.zeros(max(n_classes, 1))
    cl = np.zeros(max(n_classes, 1))
    cr = np.zeros(max(n_classes, 1))

    # stack entries: parent id, is-left flag, start, end, depth
    stack = np.empty((max_nodes, 5), dtype=np.int64)
    stack[0, 0] = -1
    stack[0, 1] = 0
    stack[0, 2] = 0
    stack[0, 3] = n
    stack[0, 4] = 0
    top = 1
    next_id = 0
    while top > 0:
        top -= 1
        parent = stack[top, 0]
        is_left = stack[top, 1]
        start = stack[top, 2]
        end = stack[top, 3]
        d = stack[top, 4]
        node = next_id
        next_id += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node
        m = end - start
        n_samples[node] = m
        depth[node] = d
        imp = _node_impurity(y_codes, y_real, idx, start, end, n_classes, counts)
        if n_classes > 0:
            for c in range(n_classes):
                value[node, c] = counts[c] / m
        else:
            s = 0.0
            for i in range(start, end):
                s += y_real[idx[i]]
            value[node, 0] = s / m

        pure = imp <= 0.0
        if n_classes == 0 and not pure:
            lo = y_real[idx[start]]
            hi = lo
            for i in range(start, end):
                v = y_real[idx[i]]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            pure = lo == hi
        if pure or m < min_samples_split:
            impurity[node] = 0.0 if pure else imp
            continue
        impurity[node] = imp

        best_gain = -1.0
        best_f = -1
        best_cut = 0.0
        found = 0
        remaining = p
        while found < k_candidates and remaining > 0:
            j = rng.integers(0, remaining)
            f = pool[j]
            pool[j] = pool[remaining - 1]
            pool[remaining - 1] = f
            remaining -= 1
            lo = X[idx[start], f]
            hi = lo
            for i in range(start, end):
                v = X[idx[i], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if not hi > lo:
                continue
            found += 1
            cut = lo + rng.random() * (hi - lo)
            while not (lo < cut < hi):
                cut = lo + rng.random() * (hi - lo)
            nl, il, ir = _split_impurity(X, y_codes, y_real, idx, start, end, f,
                                         cut, n_classes, cl, cr)
            gain = imp - (nl / m) * il - ((m - nl) / m) * ir
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_cut = cut
        if best_f < 0 or best_gain <= _MIN_REL_GAIN * imp:
            continue

        # partition idx[start:end] so rows with x < cut come first
        i = start
        jj = end - 1
        while i <= jj:
            if X[idx[i], best_f] < best_cut:
                i += 1
            else:
                t = idx[i]
                idx[i] = idx[jj]
                idx[jj] = t
                jj -= 1
        feature[node] = best_f
        cutoff[node] = best_cut
        # right pushed first so the left subtree gets the next preorder ids
        stack[top, 0] = node
        stack[top, 1] = 0
        stack[top, 2] = i
        stack[top, 3] = end
        stack[top, 4] = d + 1
        top += 1
        stack[top, 0] = node
        stack[top, 1] = 1
        stack[top, 2] = start
        stack[top, 3] = i
        stack[top, 4] = d + 1
        top += 1

    k = next_id
    return (feature[:k].copy(), cutoff[:k].copy(), left[:k].copy(),
            right[:k].copy(), n_samples[:k].copy(), impurity[:k].copy(),
            depth[:k].copy(), value[:k].copy())


def grow_tree(X, y, impurity_kind, k_candidates, min_samples_split, seed):
    """Grow a single extra-tree on ``(X, y)`` from generator seed ``seed``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if impurity_kind == GINI:
        y_codes = np.asarray(y).astype(np.int64)
        n_classes = 2 if y_codes.size == 0 else max(2, int(y_codes.max()) + 1)
        y_real = np.zeros(0)
    else:
        y_codes = np.zeros(0, dtype=np.int64)
        y_real = np.asarray(y, dtype=np.float64)
        n_classes = 0
    arrays = _grow(X, y_codes, y_real, n_classes, int(k_candidates),
                   int(min_samples_split), make_rng(seed))
    return Tree(*arrays)


class ExtraTreesForest(BaseEstimator):
    """Extra-Trees ensemble exposing Gini importances and split cutoffs.

    Parameters
    ----------
    n_estimators : int
        Number of trees.
    k_candidates : int or None
        Features examined per node; ``None`` means round(sqrt(p)) for Gini
        and round(p/3) for variance impurity.
    min_samples_split : int
        Nodes with fewer rows become leaves.
    impurity_kind : {"gini", "variance"}
    random_state : int
        Master seed; tree ``i`` uses ``derive_seed(random_state, i)``.
    n_jobs : int
        Threads used to grow trees. Does not affect the result.
    """

    def __init__(self, n_estimators=1000, k_candidates=None, min_samples_split=2,
                 impurity_kind=GINI, random_state=0, n_jobs=1):
        self.n_estimators = n_estimators
        self.k_candidates = k_candidates
        self.min_samples_split = min_samples_split
        self.impurity_kind = impurity_kind
        self.random_state = random_state
        self.n_jobs = n_jobs

    @property
    def params(self):
        return ForestParams(self.n_estimators, self.k_candidates,
                            self.min_samples_split, self.impurity_kind,
                            self.random_state)

    def fit(self, X, y):
        if self.impurity_kind not in (GINI, VARIANCE):
            raise ValueError(f"unknown impurity kind {self.impurity_kind!r}")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be at least 1")
        if hasattr(X, "columns"):
            self.feature_names_in_ = np.asarray(X.columns, dtype=object)
        X = check_array(X, dtype=np.float64, ensure_min_samples=1,
                        ensure_min_features=1)
        y = np.asarray(y).ravel()
        if len(y) != X.shape[0]:
            raise DataError(f"{X.shape[0]} rows but {len(y)} labels")
        if self.impurity_kind == GINI:
            self.classes_, y_enc = np.unique(y, return_inverse=True)
        else:
            y_enc = y.astype(np.float64)
        self.n_features_in_ = X.shape[1]
        k = self.params.resolved_k(X.shape[1])
        self.k_candidates_ = k

        def build(i):
            return grow_tree(X, y_enc, self.impurity_kind, k,
                             self.min_samples_split,
                             derive_seed(self.random_state, i))

        X = np.ascontiguousarray(X)
        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                self.trees_ = list(pool.map(build, range(self.n_estimators)))
        else:
            self.trees_ = [build(i) for i in range(self.n_estimators)]
        return self

    def importances(self):
        """Mean decrease in impurity, normalized per tree then averaged."""
        check_is_fitted(self, "trees_")
        total = np.zeros(self.n_features_in_)
        used = 0
        for tree in self.trees_:
            raw = tree.raw_importances(self.n_features_in_)
            s = raw.sum()
            if s > 0:
                total += raw / s
                used += 1
        if used == 0:
            raise DataError("every tree is a single leaf; importances undefined")
        return total / total.sum()

    @property
    def feature_importances_(self):
        return self.importances()

    def root_cutoff_mean(self, feature):
        """Mean cutoff of the shallowest split on ``feature`` across trees.

        Within a tree, ties in depth go to the first node in preorder. Trees
        that never split on the feature are ignored; ``None`` if none do.
        """
        value = self.root_cutoff_table()[feature]
        return None if np.isnan(value) else float(value)

    def root_cutoff_table(self):
        """``root_cutoff_mean`` for every feature, NaN where never used."""
        check_is_fitted(self, "trees_")
        sums = np.zeros(self.n_features_in_)
        counts = np.zeros(self.n_features_in_)
        for tree in self.trees_:
            internal = np.flatnonzero(tree.feature >= 0)
            if not internal.size:
                continue
            # sort by depth, then preorder id; np.unique keeps first occurrences
            nodes = internal[np.lexsort((internal, tree.depth[internal]))]
            feats, first = np.unique(tree.feature[nodes], return_index=True)
            sums[feats] += tree.cutoff[nodes[first]]
            counts[feats] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    def predict_proba(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64)
        out = np.zeros((X.shape[0], self.trees_[0].value.shape[1]))
        for tree in self.trees_:
            out += tree.value[tree.apply(X)]
        return out / len(self.trees_)

    def predict(self, X):
        proba = self.predict_proba(X)
        if self.impurity_kind == VARIANCE:
            return proba[:, 0]
        return self.classes_[np.argmax(proba, axis=1)]


def fit_forest(X, y, params=ForestParams(), n_jobs=1):
    return ExtraTreesForest(params.n_estimators, params.k_candidates,
                            params.min_samples_split, params.impurity_kind,
                            params.master_seed, n_jobs).fit(X, y)


def select_features(importances, t):
    """Indices ``j`` with ``importances[j] >= t * mean(importances)``."""
    if not t > 0:
        raise ValueError(f"threshold multiplier must be positive, got {t}")
    values = np.asarray(importances, dtype=np.float64)
    selected = np.flatnonzero(values >= t * values.mean())
    if selected.size == 0:
        raise EmptySelectionError(
            f"no feature reaches {t} x mean importance "
            f"(max ratio {values.max() / values.mean():.4g})")
    return selected


class ImportanceThresholdSelector(SelectorMixin, BaseEstimator):
    """Keep features whose forest importance is at least ``threshold`` x mean.

    Drop-in for a pipeline step: ``fit`` grows an :class:`ExtraTreesForest`
    and ``transform`` returns the selected columns.
    """

    def __init__(self, threshold=1.0, n_estimators=1000, k_candidates=None,
                 min_samples_split=2, impurity_kind=GINI, random_state=0,
                 n_jobs=1):
        self.threshold = threshold
        self.n_estimators = n_estimators
        self.k_candidates = k_candidates
        self.min_samples_split = min_samples_split
        self.impurity_kind = impurity_kind
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        self.estimator_ = ExtraTreesForest(
            self.n_estimators, self.k_candidates, self.min_samples_split,
            self.impurity_kind, self.random_state, self.n_jobs).fit(X, y)
        self.n_features_in_ = self.estimator_.n_features_in_
        self.importances_ = self.estimator_.importances()
        self.selected_ = select_features(self.importances_, self.threshold)
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "selected_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_] = True
        return mask
