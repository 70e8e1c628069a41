"""Compiled vs pure-Python tree kernels.

    python3 benchmarks/bench_kernels.py [--rows 1600] [--features 154] [--repeat 3]

Times one random-forest tree (bootstrap weights, mtry = ceil(p/3)), one
depth-3 boosting tree over all features, and prediction of the training
rows, for each available backend. Both backends must return identical
arrays; the script checks that before printing timings.
"""
import argparse
import math
import time

import numpy as np

from geogcp.learners import Presorted
from geogcp.learners._backend import get_kernels


def _best(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=1600)
    ap.add_argument("--features", type=int, default=154)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    g = np.random.default_rng(args.seed)
    n, p = args.rows, args.features
    X = g.normal(size=(n, p))
    y = X[:, 0] ** 2 + np.sin(X[:, 1]) + 0.1 * g.normal(size=n)
    w = np.bincount(g.integers(0, n, n), minlength=n).astype(np.float64)
    ones = np.ones(n)
    data = Presorted(X)
    mtry = math.ceil(p / 3)

    backends = {}
    for name in ("compiled", "python"):
        try:
            backends[name] = get_kernels(name)
        except ImportError:
            print(f"{name}: not available")

    rows = []
    results = {}
    for name, k in backends.items():
        rf_t, rf = _best(lambda: k.build_tree(data.Xt, y, w, data.order, 5.0, mtry, -1, np.uint64(1)), args.repeat)
        gb_t, _ = _best(lambda: k.build_tree(data.Xt, y, ones, data.order, 1.0, p, 3, np.uint64(2)), args.repeat)
        pr_t, pred = _best(lambda: k.predict_tree(rf[0], rf[1], rf[2], rf[3], rf[4], X), args.repeat)
        results[name] = (rf, pred)
        rows.append((name, rf_t, gb_t, pr_t, rf[0].size))

    if len(results) == 2:
        a, b = results["compiled"], results["python"]
        same = all(np.array_equal(u, v) for u, v in zip(a[0], b[0])) and np.array_equal(a[1], b[1])
        print(f"backends identical: {same}")
        if not same:
            raise SystemExit(1)

    print(f"n={n} p={p} mtry={mtry} (best of {args.repeat})")
    print(f"{'backend':<10}{'RF tree ms':>12}{'GB tree ms':>12}{'predict ms':>12}{'nodes':>8}")
    for name, rf_t, gb_t, pr_t, nodes in rows:
        print(f"{name:<10}{rf_t * 1e3:>12.2f}{gb_t * 1e3:>12.2f}{pr_t * 1e3:>12.3f}{nodes:>8}")
    if len(rows) == 2:
        print(f"speed-up (RF tree): {rows[1][1] / rows[0][1]:.0f}x")


if __name__ == "__main__":
    main()
