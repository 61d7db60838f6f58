"""CART decision tree with Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels

# Relative slack when comparing split scores. Candidates within it of the
# best count as ties and the first one (lowest feature, then lowest
# threshold) wins.
REL_TOL = 1e-12


class ModelError(ValueError):
    pass


def gini_impurity(class_counts) -> float:
    """1 - sum(p_i^2) for a vector of non-negative class counts."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ModelError("class counts must be a non-negative vector")
    total = counts.sum()
    if total <= 0:
        raise ModelError("gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 10
    min_samples_leaf: int = 10
    # candidate features per split; None means all
    max_features: int | None = None

    def __post_init__(self):
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ModelError("max_depth must be >= 0 and min_samples_leaf >= 1")


@dataclass
class DecisionTreeModel:
    """Flat-array binary tree. ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    n_features: int
    params: TreeParams = field(default_factory=TreeParams)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def apply(self, X) -> np.ndarray:
        X = self._check(X)
        return _kernels.tree_apply(X, self.feature, self.threshold, self.left, self.right)

    def predict_proba(self, X) -> np.ndarray:
        counts = self.counts[self.apply(X)]
        return counts / counts.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} features, got shape {X.shape}")
        return X


def _as_training(X, y, n_classes):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ModelError("X must be 2-D with one label per row")
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 1
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ModelError(f"labels must lie in 0..{n_classes - 1}")
    return X, y, n_classes


def train_decision_tree(
    X,
    y,
    n_classes: int | None = None,
    params: TreeParams = TreeParams(),
    seed: int | np.random.Generator = 0,
    allowed_features=None,
) -> DecisionTreeModel:
    """Greedy CART growth.

    A node becomes a leaf at ``max_depth``, when pure, when it has fewer
    than ``2 * min_samples_leaf`` samples, or when no admissible split
    lowers the weighted child impurity.
    """
    X, y, n_classes = _as_training(X, y, n_classes)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    allowed = (np.arange(X.shape[1], dtype=np.intp) if allowed_features is None
               else np.sort(np.asarray(allowed_features, dtype=np.intp)))
    k = params.max_features
    feature, threshold, left, right, counts = [], [], [], [], []

    def grow(samples: np.ndarray, depth: int) -> int:
        node = len(feature)
        c = np.bincount(y[samples], minlength=n_classes)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        counts.append(c)
        n = samples.size
        if depth >= params.max_depth or n < 2 * params.min_samples_leaf or np.count_nonzero(c) <= 1:
            return node
        if k is None or k >= allowed.size:
            feats = allowed
        else:
            feats = np.sort(rng.choice(allowed, size=k, replace=False))
        f, thr, score = _kernels.best_split(X, y, samples, feats, n_classes, params.min_samples_leaf, REL_TOL)
        parent = float(np.sum(c.astype(np.float64) ** 2)) / n
        if f < 0 or not score > parent + REL_TOL * parent:
            return node
        mask = X[samples, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(samples[mask], depth + 1)
        right[node] = grow(samples[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0], dtype=np.intp), 0)
    return DecisionTreeModel(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        counts=np.array(counts, dtype=np.int64).reshape(len(counts), n_classes),
        n_features=X.shape[1],
        params=params,
    )


def predict_tree(model: DecisionTreeModel, vector) -> np.ndarray:
    """Class probabilities for one feature vector."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (model.n_features,):
        raise ModelError(f"expected a vector of {model.n_features} features, got shape {v.shape}")
    return model.predict_proba(v[None, :])[0]
