"""Pure numpy implementations of the split-search and traversal kernels.

Reference behaviour for the compiled module: results must match it exactly.
"""

import numpy as np


def _feature_scores(values, labels, n_classes, min_leaf, total):
    order = np.argsort(values, kind="stable")
    vs = values[order]
    onehot = np.zeros((vs.size, n_classes), dtype=np.int64)
    onehot[np.arange(vs.size), labels[order]] = 1
    left = np.cumsum(onehot, axis=0)[:-1]
    right = total - left
    n = vs.size
    n_l = np.arange(1, n, dtype=np.int64)
    n_r = n - n_l
    valid = (vs[:-1] != vs[1:]) & (n_l >= min_leaf) & (n_r >= min_leaf)
    # integer-valued doubles: the class sum is exact in any order
    s_l = np.sum(left.astype(np.float64) ** 2, axis=1)
    s_r = np.sum(right.astype(np.float64) ** 2, axis=1)
    scores = s_l / n_l.astype(np.float64) + s_r / n_r.astype(np.float64)
    scores[~valid] = -1.0
    return vs, scores


def best_split(X, y, samples, features, n_classes, min_leaf, rel_tol):
    n = samples.shape[0]
    if n < 2 or features.shape[0] == 0:
        return -1, np.nan, -1.0
    labels = y[samples]
    total = np.bincount(labels, minlength=n_classes).astype(np.int64)
    per_feature = []
    gmax = -1.0
    for f in features:
        vs, scores = _feature_scores(X[samples, f], labels, n_classes, min_leaf, total)
        fmax = float(scores.max()) if scores.size else -1.0
        per_feature.append((int(f), vs, scores, fmax))
        gmax = max(gmax, fmax)
    if gmax <= 0.0:
        return -1, np.nan, -1.0
    cutoff = gmax - rel_tol * gmax
    for f, vs, scores, fmax in per_feature:
        if fmax < cutoff:
            continue
        hits = np.flatnonzero(scores >= cutoff)
        if hits.size:
            pos = int(hits[0])
            thr = (vs[pos] + vs[pos + 1]) / 2.0
            if thr >= vs[pos + 1]:
                thr = vs[pos]
            return f, float(thr), float(scores[pos])
    return -1, np.nan, -1.0


def tree_apply(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.intp)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node
