"""Exhaustive, exact-arithmetic CART reference used by the tree tests.

Impurities are computed with Fractions so ties are exact. Among splits with
the lowest weighted child Gini the lowest feature index wins, then the lowest
threshold. A node splits only if that impurity is strictly below the parent's.
"""

from fractions import Fraction

import numpy as np


def gini(counts):
    n = sum(counts)
    return 1 - sum(Fraction(c, n) ** 2 for c in counts)


def _counts(y, k):
    return [int(np.sum(y == c)) for c in range(k)]


def best_split(X, y, k, min_leaf):
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for a, b in zip(values, values[1:]):
            thr = (a + b) / 2.0
            mask = X[:, f] <= thr
            nl, nr = int(mask.sum()), n - int(mask.sum())
            if nl < min_leaf or nr < min_leaf:
                continue
            w = Fraction(nl, n) * gini(_counts(y[mask], k)) + Fraction(nr, n) * gini(_counts(y[~mask], k))
            if best is None or w < best[0]:
                best = (w, f, thr)
    return best


def oracle_tree(X, y, k, max_depth, min_leaf, depth=0):
    counts = tuple(_counts(y, k))
    if depth >= max_depth or len(y) == 0:
        return ("leaf", counts)
    found = best_split(X, y, k, min_leaf)
    if found is None or not found[0] < gini(counts):
        return ("leaf", counts)
    _, f, thr = found
    mask = X[:, f] <= thr
    return (f, thr,
            oracle_tree(X[mask], y[mask], k, max_depth, min_leaf, depth + 1),
            oracle_tree(X[~mask], y[~mask], k, max_depth, min_leaf, depth + 1))


def tree_structure(model, node=0):
    """The same nested-tuple shape for a trained DecisionTreeModel."""
    if model.feature[node] < 0:
        return ("leaf", tuple(int(c) for c in model.counts[node]))
    return (int(model.feature[node]), float(model.threshold[node]),
            tree_structure(model, model.left[node]), tree_structure(model, model.right[node]))
