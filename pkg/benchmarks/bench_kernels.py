"""Compare the compiled and numpy split-search kernels.

    python3 benchmarks/bench_kernels.py [--rows 5400] [--features 72] [--repeat 5]

Prints the median wall time per call for each backend and the speedup, then
checks that both backends grow the identical tree.
"""

import argparse
import statistics
import time

import numpy as np

from envclass import _kernels
from envclass.models.tree import REL_TOL, TreeParams, train_decision_tree


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=5400)
    ap.add_argument("--features", type=int, default=72)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    # quantized values give realistic runs of ties, like dB readings
    X = np.round(rng.normal(size=(args.rows, args.features)), 1)
    y = ((X[:, 0] + 0.5 * X[:, 1] + rng.normal(0, 0.5, args.rows)) > 0).astype(np.intp)
    y[: args.rows // 3] = args.classes - 1
    samples = np.arange(args.rows, dtype=np.intp)
    feats = np.arange(args.features, dtype=np.intp)

    backends = _kernels.available()
    results = {}
    trees = {}
    for name in backends:
        with _kernels.use_backend(name):
            split_t = _median_time(
                lambda: _kernels.best_split(X, y, samples, feats, args.classes, 10, REL_TOL), args.repeat)
            tree = train_decision_tree(X, y, args.classes, TreeParams(), 0)
            apply_t = _median_time(
                lambda: _kernels.tree_apply(X, tree.feature, tree.threshold, tree.left, tree.right), args.repeat)
            train_t = _median_time(lambda: train_decision_tree(X, y, args.classes, TreeParams(), 0),
                                   max(1, args.repeat // 2))
        results[name] = (split_t, apply_t, train_t)
        trees[name] = tree

    print(f"rows={args.rows} features={args.features} classes={args.classes}")
    print(f"{'backend':8s} {'best_split (ms)':>16s} {'tree_apply (ms)':>16s} {'train tree (s)':>15s}")
    for name, (s, a, t) in results.items():
        print(f"{name:8s} {s * 1e3:16.2f} {a * 1e3:16.3f} {t:15.3f}")
    if len(results) == 2:
        c, p = results["cython"], results["python"]
        print(f"speedup  {p[0] / c[0]:16.1f} {p[1] / c[1]:16.1f} {p[2] / c[2]:15.1f}")
        same = all(np.array_equal(getattr(trees["cython"], f), getattr(trees["python"], f), equal_nan=True)
                   for f in ("feature", "threshold", "left", "right", "counts"))
        print("identical trees:", same)
    else:
        print("compiled extension not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
