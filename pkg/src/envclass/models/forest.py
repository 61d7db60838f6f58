"""Bagged ensemble of CART trees."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tree import DecisionTreeModel, ModelError, TreeParams, _as_training, train_decision_tree

N_ESTIMATORS = 5


@dataclass
class RandomForestModel:
    trees: list[DecisionTreeModel]
    seeds: list[int]
    max_features: int | None
    feature_mode: str = "per_split"

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def n_classes(self) -> int:
        return self.trees[0].n_classes

    def predict_proba(self, X) -> np.ndarray:
        """Mean of the per-tree leaf distributions."""
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        """Majority of tree argmaxes; ties go to the larger summed probability."""
        probs = np.stack([t.predict_proba(X) for t in self.trees])
        votes = np.zeros(probs.shape[1:], dtype=np.int64)
        winners = np.argmax(probs, axis=2)
        for t in range(probs.shape[0]):
            votes[np.arange(votes.shape[0]), winners[t]] += 1
        summed = probs.sum(axis=0)
        top = votes == votes.max(axis=1, keepdims=True)
        # ties left after the probability rule go to the lowest class index
        return np.argmax(np.where(top, summed, -np.inf), axis=1)


def train_random_forest(
    X,
    y,
    n_classes: int | None = None,
    params: TreeParams = TreeParams(),
    seed: int = 0,
    n_estimators: int = N_ESTIMATORS,
    feature_mode: str = "per_split",
) -> RandomForestModel:
    """Train ``n_estimators`` trees on bootstrap resamples.

    ``feature_mode="per_split"`` samples ``floor(sqrt(d))`` candidate
    features at every split; ``"per_tree"`` instead gives each tree a
    disjoint random block of features.
    """
    X, y, n_classes = _as_training(X, y, n_classes)
    n, d = X.shape
    if feature_mode not in ("per_split", "per_tree"):
        raise ModelError(f"unknown feature_mode {feature_mode!r}")
    children = np.random.SeedSequence(seed).spawn(n_estimators)
    seeds = [int(c.generate_state(1)[0]) for c in children]

    blocks = [None] * n_estimators
    if feature_mode == "per_tree":
        perm = np.random.default_rng(seed).permutation(d)
        blocks = [b for b in np.array_split(perm, n_estimators)]
        if any(b.size == 0 for b in blocks):
            raise ModelError(f"per_tree mode needs at least {n_estimators} features")
        tree_params = TreeParams(params.max_depth, params.min_samples_leaf, None)
        max_features = None
    else:
        max_features = params.max_features or max(1, int(math.floor(math.sqrt(d))))
        tree_params = TreeParams(params.max_depth, params.min_samples_leaf, max_features)

    trees = []
    for tree_seed, block in zip(seeds, blocks):
        rng = np.random.default_rng(tree_seed)
        boot = rng.integers(0, n, size=n)
        trees.append(train_decision_tree(X[boot], y[boot], n_classes, tree_params, rng, block))
    return RandomForestModel(trees, seeds, max_features, feature_mode)
