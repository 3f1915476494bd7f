"""Time the jitted kernels against their numpy twins on cohort-sized inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each case is run once untimed (JIT compile / warm caches), then ``--repeat``
times; the median wall time is reported together with the speedup and a
check that both paths return the same arrays.
"""
import argparse
import statistics
import time

import numpy as np

from qstrat._kernels import _numba as J
from qstrat._kernels import _numpy as P
from qstrat.learners.boosting import presort_columns
from qstrat.learners.svm import kernel_matrix


def _cases(quick):
    rng = np.random.default_rng(0)
    n, d = 44, 225
    X = rng.normal(size=(n, d))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    yi = rng.integers(0, 3, n).astype(np.int64)
    trees = 20 if quick else 100

    K = kernel_matrix(X, X, "rbf", 1.0 / d, 3, 0.0)
    X1 = np.column_stack([X, np.ones(n)])
    lip = np.linalg.norm(X1, 2) ** 2 / 4.0
    t = (y > 0).astype(np.float64)
    ps = presort_columns(X)
    empty_i, empty_f = np.zeros((0, 0), dtype=np.int64), np.zeros((0, 0))
    cand = np.arange(d, dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)

    return [
        ("smo_solve rbf n=44", lambda k: k.smo_solve(K, y, 1.0, 1e-3, 100_000)),
        ("fista_l1_logistic d=225", lambda k: k.fista_l1_logistic(X, y, 1.0, lip, 1e-6, 10_000)),
        ("build_tree gini", lambda k: k.build_tree(X, yi, np.zeros(n), rows, 3, 0, -1, 2, 1, 15, cand,
                                                    np.uint64(1), *((empty_i, empty_f) if k is J else ()))),
        (f"forest_fit {trees} trees", lambda k: k.forest_fit(X, yi, 3, trees, -1, 2, 1, 15, True, np.uint64(2))),
        (f"boost_fit_head {trees} stages", lambda k: k.boost_fit_head(X, t, 0.0, trees, 3, 1, 0.1, 35, 180,
                                                                      np.uint64(3), ps)),
    ]


def _time(fn, kernels, repeat):
    out = fn(kernels)
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(kernels)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), out


def _equal(a, b):
    if isinstance(a, tuple):
        return all(_equal(u, v) for u, v in zip(a, b))
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0, atol=1e-9))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="fewer trees, for smoke runs")
    args = ap.parse_args(argv)
    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  same")
    for name, fn in _cases(args.quick):
        tj, oj = _time(fn, J, args.repeat)
        tp, op = _time(fn, P, max(1, args.repeat // 2))
        print(f"{name:32s} {tj * 1e3:10.2f} {tp * 1e3:10.2f} {tp / tj:8.1f}x  {_equal(oj, op)}")


if __name__ == "__main__":
    main()
