# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled split-search and tree-traversal kernels.

Must stay numerically identical to ``_pykernels``: no fast-math, and the
same operation order for every floating-point expression.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

ctypedef cnp.intp_t intp


cdef struct Item:
    double value
    intp label


cdef int _cmp_item(const void* a, const void* b) noexcept nogil:
    cdef double va = (<Item*>a).value
    cdef double vb = (<Item*>b).value
    if va < vb:
        return -1
    if va > vb:
        return 1
    return 0


cdef void _fill(Item* items, const double[:, ::1] X, const intp[::1] y,
                const intp[::1] samples, intp f) noexcept nogil:
    cdef Py_ssize_t i
    cdef intp s
    for i in range(samples.shape[0]):
        s = samples[i]
        items[i].value = X[s, f]
        items[i].label = y[s]
    qsort(items, samples.shape[0], sizeof(Item), _cmp_item)


cdef double _sq_sum(const intp* counts, int k) noexcept nogil:
    cdef double acc = 0.0
    cdef double c
    cdef int j
    for j in range(k):
        c = <double>counts[j]
        acc = acc + c * c
    return acc


cdef double _sweep(Item* items, Py_ssize_t n, const intp* total, intp* left, int k,
                   int min_leaf, double cutoff, Py_ssize_t* first_pos) noexcept nogil:
    # Returns the max score over valid cut positions; if cutoff is finite,
    # stores the first position whose score reaches it and stops there.
    cdef Py_ssize_t i
    cdef int j
    cdef double best = -1.0
    cdef double score, n_l, n_r, s_l, s_r
    cdef intp right[64]
    for j in range(k):
        left[j] = 0
    first_pos[0] = -1
    for i in range(n - 1):
        left[items[i].label] += 1
        if items[i].value == items[i + 1].value:
            continue
        if i + 1 < min_leaf or n - i - 1 < min_leaf:
            continue
        for j in range(k):
            right[j] = total[j] - left[j]
        n_l = <double>(i + 1)
        n_r = <double>(n - i - 1)
        s_l = _sq_sum(left, k)
        s_r = _sq_sum(right, k)
        score = s_l / n_l + s_r / n_r
        if cutoff >= 0.0:
            if score >= cutoff:
                first_pos[0] = i
                return score
        elif score > best:
            best = score
    return best


def best_split(const double[:, ::1] X, const intp[::1] y, const intp[::1] samples,
               const intp[::1] features, int n_classes, int min_leaf, double rel_tol):
    """Best Gini split of ``samples`` over ``features``.

    Returns ``(feature, threshold, score)`` where ``score`` is
    ``sum(left_counts**2)/n_left + sum(right_counts**2)/n_right`` (higher is
    better), or ``(-1, nan, -1.0)`` when no admissible split exists.
    """
    cdef Py_ssize_t n = samples.shape[0]
    cdef Py_ssize_t nf = features.shape[0]
    cdef Py_ssize_t i, fi
    cdef Py_ssize_t pos = -1
    cdef double gmax = -1.0
    cdef double cutoff, thr
    cdef intp best_f = -1
    cdef double best_thr = np.nan
    cdef double best_score = -1.0
    if n_classes > 64:
        raise ValueError("at most 64 classes supported")
    if n < 2 or nf == 0:
        return -1, np.nan, -1.0

    cdef Item* items = <Item*>malloc(n * sizeof(Item))
    cdef double* fmax = <double*>malloc(nf * sizeof(double))
    cdef intp total[64]
    cdef intp left[64]
    if items == NULL or fmax == NULL:
        free(items)
        free(fmax)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n_classes):
                total[i] = 0
            for i in range(n):
                total[y[samples[i]]] += 1
            for fi in range(nf):
                _fill(items, X, y, samples, features[fi])
                fmax[fi] = _sweep(items, n, total, left, n_classes, min_leaf, -1.0, &pos)
                if fmax[fi] > gmax:
                    gmax = fmax[fi]
            if gmax > 0.0:
                cutoff = gmax - rel_tol * gmax
                for fi in range(nf):
                    if fmax[fi] < cutoff:
                        continue
                    _fill(items, X, y, samples, features[fi])
                    best_score = _sweep(items, n, total, left, n_classes, min_leaf, cutoff, &pos)
                    if pos >= 0:
                        best_f = features[fi]
                        thr = (items[pos].value + items[pos + 1].value) / 2.0
                        if thr >= items[pos + 1].value:
                            thr = items[pos].value
                        best_thr = thr
                        break
    finally:
        free(items)
        free(fmax)
    if best_f < 0:
        return -1, np.nan, -1.0
    return int(best_f), float(best_thr), float(best_score)


def tree_apply(const double[:, ::1] X, const intp[::1] feature, const double[::1] threshold,
               const intp[::1] left, const intp[::1] right):
    """Leaf node index reached by every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    cdef cnp.ndarray[intp, ndim=1] out = np.empty(n, dtype=np.intp)
    cdef intp[::1] ov = out
    cdef Py_ssize_t i
    cdef intp node
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            ov[i] = node
    return out
