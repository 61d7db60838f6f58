import math

import numpy as np
import pytest

from envclass.features import FeatureSetId, extract_matrix, fit_normalizer, normalize_matrix
from envclass.models.forest import N_ESTIMATORS, RandomForestModel, train_random_forest
from envclass.models.tree import ModelError, TreeParams, train_decision_tree
from envclass.pipeline import encode_labels
from envclass.models.bundle import THREE_CLASSES


@pytest.fixture(scope="module")
def synth_xy(small_sessions):
    m = extract_matrix(small_sessions)
    X = normalize_matrix(m.values, fit_normalizer(m.values, FeatureSetId.ALL72))
    return X, encode_labels(m.labels, THREE_CLASSES)


def test_defaults(synth_xy):
    X, y = synth_xy
    f = train_random_forest(X, y, 3, seed=0)
    assert len(f.trees) == N_ESTIMATORS == 5
    assert f.max_features == math.floor(math.sqrt(72))
    assert all(t.depth() <= 10 for t in f.trees)


def test_same_seed_bit_identical(synth_xy):
    X, y = synth_xy
    a, b = train_random_forest(X, y, 3, seed=9), train_random_forest(X, y, 3, seed=9)
    assert a.seeds == b.seeds
    for ta, tb in zip(a.trees, b.trees):
        for field in ("feature", "threshold", "left", "right", "counts"):
            assert np.array_equal(getattr(ta, field), getattr(tb, field), equal_nan=True)
    c = train_random_forest(X, y, 3, seed=10)
    assert c.seeds != a.seeds


def test_not_much_worse_than_one_tree(synth_xy):
    X, y = synth_xy
    forest = train_random_forest(X, y, 3, seed=0)
    tree = train_decision_tree(X, y, 3)
    assert np.mean(forest.predict(X) == y) >= np.mean(tree.predict(X) == y) - 0.02


def test_per_tree_feature_blocks(synth_xy):
    X, y = synth_xy
    f = train_random_forest(X, y, 3, seed=0, feature_mode="per_tree")
    used = [set(t.feature[t.feature >= 0].tolist()) for t in f.trees]
    for i in range(len(used)):
        for j in range(i + 1, len(used)):
            assert not used[i] & used[j]
    with pytest.raises(ModelError):
        train_random_forest(X[:, :3], y, 3, feature_mode="per_tree")
    with pytest.raises(ModelError):
        train_random_forest(X, y, 3, feature_mode="bogus")


def _stub_tree(proba_rows):
    # a depth-0 tree whose single leaf holds the given counts
    counts = np.array([proba_rows], dtype=np.int64)
    return train_decision_tree(np.zeros((int(counts.sum()), 1)),
                               np.repeat(np.arange(counts.shape[1]), counts[0]), counts.shape[1],
                               TreeParams(max_depth=0))


def test_vote_tie_uses_summed_probability():
    # two trees vote class 0 weakly, two vote class 1 strongly, one votes class 2
    trees = [_stub_tree([6, 4, 0]), _stub_tree([6, 4, 0]), _stub_tree([1, 9, 0]),
             _stub_tree([1, 9, 0]), _stub_tree([0, 0, 10])]
    f = RandomForestModel(trees, [0] * 5, None)
    assert f.predict(np.zeros((1, 1))).tolist() == [1]
    assert np.allclose(f.predict_proba(np.zeros((1, 1))), [[0.28, 0.52, 0.2]])


def test_majority_beats_probability_mass():
    trees = [_stub_tree([6, 4]), _stub_tree([6, 4]), _stub_tree([6, 4]),
             _stub_tree([0, 10]), _stub_tree([0, 10])]
    f = RandomForestModel(trees, [0] * 5, None)
    assert f.predict(np.zeros((1, 1))).tolist() == [0]
    assert f.predict_proba(np.zeros((1, 1)))[0].argmax() == 1
