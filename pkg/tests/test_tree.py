import numpy as np
import pytest
from hypothesis import given, strategies as st

from envclass.models.tree import ModelError, TreeParams, gini_impurity, predict_tree, train_decision_tree

from tree_oracle import oracle_tree, tree_structure


@pytest.mark.parametrize("counts, want", [([10, 0, 0], 0.0), ([5, 5], 0.5), ([2, 3, 5], 1 - (0.04 + 0.09 + 0.25))])
def test_gini(counts, want):
    assert gini_impurity(counts) == pytest.approx(want, abs=1e-15)
    assert gini_impurity([2, 3, 5]) == pytest.approx(0.62)


def test_gini_empty():
    with pytest.raises(ModelError):
        gini_impurity([0, 0])


def test_separable_root_split():
    X = np.repeat([0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 10)[:, None]
    y = X[:, 0].astype(int)
    t = train_decision_tree(X, y, 2)
    assert t.feature[0] == 0 and t.threshold[0] == 0.5
    assert t.n_nodes == 3
    assert all(np.count_nonzero(t.counts[l]) == 1 for l in t.leaves())


def test_single_label_is_one_leaf():
    X = np.random.default_rng(0).normal(size=(50, 3))
    t = train_decision_tree(X, np.full(50, 2), 3)
    assert t.n_nodes == 1
    assert predict_tree(t, X[0]).tolist() == [0, 0, 1]


def test_leaf_probabilities():
    X = np.array([[0.0]] * 6 + [[1.0]] * 4)
    y = np.array([0] * 6 + [1] * 4)
    t = train_decision_tree(X, y, 2, TreeParams(max_depth=0))
    assert predict_tree(t, [0.3]).tolist() == [0.6, 0.4]
    assert np.array_equal(predict_tree(t, [0.3]), predict_tree(t, [0.3]))


@given(st.integers(0, 2**31), st.integers(2, 12), st.integers(1, 2), st.integers(2, 3),
       st.integers(1, 3), st.integers(0, 3))
def test_matches_exhaustive_oracle(seed, n, d, k, min_leaf, max_depth):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(n, d)).astype(float) + rng.integers(0, 2, size=(n, d)) * 0.25
    y = rng.integers(0, k, size=n)
    t = train_decision_tree(X, y, k, TreeParams(max_depth, min_leaf))
    assert tree_structure(t) == oracle_tree(X, y, k, max_depth, min_leaf)


def test_oracle_comparison_is_not_vacuous():
    rng = np.random.default_rng(0)
    splits = 0
    for _ in range(50):
        X = rng.integers(0, 5, size=(12, 2)).astype(float)
        y = rng.integers(0, 2, size=12)
        splits += train_decision_tree(X, y, 2, TreeParams(2, 1)).n_nodes > 1
    assert splits > 40


@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 15))
def test_structural_invariants(seed, depth, min_leaf):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(200, 4)), 1)
    y = (X[:, 0] + rng.normal(0, 0.5, 200) > 0).astype(int) + (X[:, 1] > 1)
    t = train_decision_tree(X, y, 3, TreeParams(depth, min_leaf))
    assert t.depth() <= depth
    assert t.counts[0].sum() == 200
    for node in range(t.n_nodes):
        if t.feature[node] >= 0:
            l, r = t.left[node], t.right[node]
            assert np.array_equal(t.counts[l] + t.counts[r], t.counts[node])
            assert gini_impurity(t.counts[node]) > 0
        else:
            assert t.counts[node].sum() >= min_leaf
    proba = t.predict_proba(X)
    assert np.allclose(proba.sum(axis=1), 1.0)


def test_allowed_features_restrict_splits():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 5))
    y = (X[:, 0] > 0).astype(int)
    t = train_decision_tree(X, y, 2, TreeParams(4, 5), allowed_features=[2, 4])
    used = set(t.feature[t.feature >= 0].tolist())
    assert used <= {2, 4}


def test_input_validation():
    with pytest.raises(ModelError):
        train_decision_tree(np.zeros((3, 2)), [0, 1, 5], 2)
    t = train_decision_tree(np.zeros((4, 2)), [0, 1, 0, 1], 2)
    with pytest.raises(ModelError):
        t.predict(np.zeros((1, 3)))
    with pytest.raises(ModelError):
        TreeParams(min_samples_leaf=0)
