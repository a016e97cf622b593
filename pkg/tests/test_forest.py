import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybrid_screen.exceptions import DataError, EmptySelectionError
from hybrid_screen.forest import (GINI, VARIANCE, ExtraTreesForest, ForestParams,
                                  ImportanceThresholdSelector, Tree, fit_forest,
                                  grow_tree, select_features)

from conftest import planted_table


def _gini(y):
    if len(y) == 0:
        return 0.0
    p = np.bincount(y.astype(int), minlength=2) / len(y)
    return 1.0 - np.sum(p ** 2)


def _one_split_tree():
    # root: 10 rows (5/5), gini 0.5, splits feature 0 into two pure children
    return Tree(feature=np.array([0, -1, -1]), cutoff=np.array([0.5, 0, 0]),
                left=np.array([1, -1, -1]), right=np.array([2, -1, -1]),
                n_samples=np.array([10, 5, 5]), impurity=np.array([0.5, 0, 0]),
                depth=np.array([0, 1, 1]),
                value=np.array([[0.5, 0.5], [1.0, 0], [0, 1.0]]))


def _forest_from(trees, p):
    f = ExtraTreesForest(n_estimators=len(trees))
    f.trees_, f.n_features_in_ = trees, p
    return f


def test_hand_built_tree_importance():
    f = _forest_from([_one_split_tree()], 2)
    assert f.importances().tolist() == [1.0, 0.0]


def test_root_cutoff_mean_over_trees():
    a, b = _one_split_tree(), _one_split_tree()
    a.cutoff[0], b.cutoff[0] = 4.9, 5.1
    f = _forest_from([a, b], 2)
    assert f.root_cutoff_mean(0) == pytest.approx(5.0)
    assert f.root_cutoff_mean(1) is None


def test_root_cutoff_prefers_shallowest_then_preorder():
    # root on f1; depth-1 nodes: id 1 on f0 (cut 2.0), id 4 on f0 (cut 3.0)
    t = Tree(feature=np.array([1, 0, -1, -1, 0, -1, -1]),
             cutoff=np.array([9.0, 2.0, 0, 0, 3.0, 0, 0]),
             left=np.array([1, 2, -1, -1, 5, -1, -1]),
             right=np.array([4, 3, -1, -1, 6, -1, -1]),
             n_samples=np.array([8, 4, 2, 2, 4, 2, 2]),
             impurity=np.array([0.5, 0.5, 0, 0, 0.5, 0, 0]),
             depth=np.array([0, 1, 2, 2, 1, 2, 2]),
             value=np.zeros((7, 2)))
    f = _forest_from([t], 2)
    assert f.root_cutoff_mean(0) == 2.0
    assert f.root_cutoff_mean(1) == 9.0


def test_single_class_gives_leaf_only_trees():
    X = np.random.default_rng(0).normal(size=(20, 3))
    f = ExtraTreesForest(n_estimators=5).fit(X, np.ones(20))
    assert all(t.is_leaf_only for t in f.trees_)
    assert np.all(f.predict(X) == 1)
    with pytest.raises(DataError):
        f.importances()


def test_disjoint_ranges_split_perfectly_at_depth_one():
    X = np.r_[np.arange(5.0), np.arange(10.0, 15.0)][:, None]
    y = np.r_[np.zeros(5), np.ones(5)]
    f = ExtraTreesForest(n_estimators=30, random_state=4).fit(X, y)
    for t in f.trees_:
        # any cutoff landing between 4 and 10 gives pure children
        if 4.0 < t.cutoff[0] <= 10.0:
            assert t.node_count == 3 and t.depth.max() == 1
        assert t.impurity[t.feature < 0].max() == 0.0


def test_single_feature_importance_is_one():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 1))
    f = ExtraTreesForest(n_estimators=10).fit(X, (X[:, 0] > 0).astype(int))
    assert f.importances().tolist() == [1.0]


def test_forest_determinism_and_jobs_independence():
    t = planted_table(3, n=120, p=6)
    a = ExtraTreesForest(n_estimators=25, random_state=9).fit(t.matrix, t.labels)
    b = ExtraTreesForest(n_estimators=25, random_state=9, n_jobs=4).fit(t.matrix, t.labels)
    for ta, tb in zip(a.trees_, b.trees_):
        for name in ("feature", "cutoff", "left", "right", "n_samples", "impurity"):
            np.testing.assert_array_equal(getattr(ta, name), getattr(tb, name))
    assert np.array_equal(a.importances(), b.importances())


def _check_tree(tree, X, y, kind):
    node_of = np.zeros(len(y), dtype=int)
    rows = {0: np.arange(len(y))}
    for node in range(tree.node_count):
        idx = rows[node]
        assert tree.n_samples[node] == len(idx) >= 1
        if kind == GINI:
            assert tree.impurity[node] == pytest.approx(_gini(y[idx]), abs=1e-12)
            assert 0.0 <= tree.impurity[node] <= 0.5
        else:
            assert tree.impurity[node] == pytest.approx(np.var(y[idx]), abs=1e-9)
        f = tree.feature[node]
        internal = f >= 0
        assert internal == (tree.left[node] >= 0) == (tree.right[node] >= 0)
        if not internal:
            node_of[idx] = node
            continue
        vals = X[idx, f]
        assert vals.min() < tree.cutoff[node] < vals.max()
        go_left = vals < tree.cutoff[node]
        L, R = tree.left[node], tree.right[node]
        rows[L], rows[R] = idx[go_left], idx[~go_left]
        assert tree.n_samples[node] == tree.n_samples[L] + tree.n_samples[R]
        weighted = (len(rows[L]) * tree.impurity[L] + len(rows[R]) * tree.impurity[R])
        assert weighted / len(idx) < tree.impurity[node]
        assert tree.depth[L] == tree.depth[R] == tree.depth[node] + 1
    np.testing.assert_array_equal(tree.apply(X), node_of)


@given(seed=st.integers(0, 2**32), n=st.integers(2, 60), p=st.integers(1, 5),
       kind=st.sampled_from([GINI, VARIANCE]), mss=st.integers(2, 6))
def test_tree_structure_matches_data(seed, n, p, kind, mss):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, p)), 1)  # rounding creates ties
    y = rng.integers(0, 2, n).astype(float) if kind == GINI else rng.normal(size=n)
    tree = grow_tree(X, y, kind, max(1, p // 2), mss, seed)
    _check_tree(tree, X, y, kind)
    for leaf in np.flatnonzero(tree.feature < 0):
        assert tree.n_samples[leaf] >= 1


@given(seed=st.integers(0, 2**32), n=st.integers(2, 60), p=st.integers(1, 6),
       kind=st.sampled_from([GINI, VARIANCE]))
def test_importance_vector_normalized(seed, n, p, kind):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = np.r_[0, 1, rng.integers(0, 2, n - 2)].astype(float) if kind == GINI \
        else rng.normal(size=n)
    f = fit_forest(X, y, ForestParams(n_estimators=8, impurity_kind=kind,
                                      master_seed=seed))
    imp = f.importances()
    assert np.all(imp >= 0)
    assert abs(imp.sum() - 1.0) < 1e-9


def test_pure_child_leaves_and_min_samples_split():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 2, 40)
    f = ExtraTreesForest(n_estimators=5, min_samples_split=50).fit(X, y)
    assert all(t.is_leaf_only for t in f.trees_)


def test_constant_features_never_split():
    rng = np.random.default_rng(2)
    X = np.c_[np.full(30, 3.0), rng.normal(size=30)]
    f = ExtraTreesForest(n_estimators=20, k_candidates=1).fit(X, (X[:, 1] > 0))
    for t in f.trees_:
        assert not np.any(t.feature == 0)


def test_resolved_k_defaults():
    assert ForestParams().resolved_k(1249) == 35
    assert ForestParams(impurity_kind=VARIANCE).resolved_k(30) == 10
    assert ForestParams(k_candidates=100).resolved_k(4) == 4
    assert ForestParams().resolved_k(1) == 1


def test_planted_column_is_top_importance():
    hits = sum(
        int(np.argmax(fit_forest(t.matrix, t.labels,
                                 ForestParams(n_estimators=200, master_seed=s))
                      .importances()) == 0)
        for s in range(10) for t in [planted_table(s)])
    assert hits >= 9


# selection

def test_select_uniform_keeps_all():
    assert select_features(np.full(4, 0.25), 1.0).tolist() == [0, 1, 2, 3]


def test_select_hand_example():
    assert select_features([0.7, 0.2, 0.1], 1.5).tolist() == [0]


def test_select_empty_raises():
    with pytest.raises(EmptySelectionError):
        select_features([0.5, 0.5], 1.5)
    with pytest.raises(ValueError):
        select_features([0.5, 0.5], 0.0)


@given(values=st.lists(st.floats(0, 1), min_size=1, max_size=30).filter(lambda v: sum(v) > 0),
       t1=st.floats(0.01, 3), t2=st.floats(0.01, 3))
def test_select_antitone(values, t1, t2):
    lo, hi = sorted((t1, t2))

    def sel(t):
        try:
            return set(select_features(values, t).tolist())
        except EmptySelectionError:
            return set()
    assert sel(hi) <= sel(lo)


def test_selector_transformer():
    t = planted_table(1, n=200, p=8)
    sel = ImportanceThresholdSelector(threshold=2.0, n_estimators=100).fit(t.matrix, t.labels)
    assert sel.get_support(indices=True).tolist() == [0]
    assert sel.transform(t.matrix).shape == (200, 1)


def test_forest_predict_shapes():
    t = planted_table(2, n=100, p=4)
    f = ExtraTreesForest(n_estimators=20).fit(t.matrix, t.labels)
    proba = f.predict_proba(t.matrix)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    r = ExtraTreesForest(n_estimators=5, impurity_kind=VARIANCE).fit(t.matrix, t.matrix[:, 0])
    assert r.predict(t.matrix).shape == (100,)
