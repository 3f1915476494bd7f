"""The jitted kernels and their numpy twins must produce identical arrays."""
import importlib.util
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

pytest.importorskip("numba")

from qstrat._kernels import _numba as J, _numpy as P  # noqa: E402
from qstrat.learners.boosting import presort_columns  # noqa: E402
from qstrat.learners.svm import kernel_matrix  # noqa: E402
from qstrat.rng import splitmix64  # noqa: E402


def _same(a, b):
    return len(a) == len(b) and all(np.array_equal(np.asarray(u), np.asarray(v)) for u, v in zip(a, b))


def test_splitmix_matches_python():
    for x in (0, 1, 12345, 2**63, 2**64 - 1):
        assert int(J.splitmix64(np.uint64(x))) == splitmix64(x)


@pytest.mark.parametrize("trial", range(60))
def test_build_tree_twins(trial):
    rng = np.random.default_rng(trial)
    n, d = int(rng.integers(2, 60)), int(rng.integers(1, 8))
    X = np.round(rng.normal(size=(n, d)), int(rng.integers(0, 3)))
    criterion = trial % 2
    k = int(rng.integers(2, 4))
    yc = rng.integers(0, k, n).astype(np.int64)
    yr = rng.normal(size=n)
    rows = rng.integers(0, n, n).astype(np.int64) if trial % 3 == 0 else np.arange(n, dtype=np.int64)
    cand = np.arange(d, dtype=np.int64)
    args = (X, yc, yr, rows, k, criterion, int(rng.integers(-1, 6)), int(rng.integers(2, 5)),
            int(rng.integers(1, 3)), int(rng.integers(1, d + 1)), cand, np.uint64(trial))
    empty_i, empty_f = np.zeros((0, 0), dtype=np.int64), np.zeros((0, 0))
    a = J.build_tree(*args, empty_i, empty_f)
    b = P.build_tree(*args)
    assert _same(a, b)
    if criterion == 1:
        ps = presort_columns(X)
        c = J.build_tree(*args, ps, np.take_along_axis(X.T, ps, axis=1))
        assert _same(a, c)


@pytest.mark.parametrize("trial", range(200))
def test_levelwise_regression_tree_matches_depth_first(trial):
    rng = np.random.default_rng(1000 + trial)
    n, d = int(rng.integers(2, 80)), int(rng.integers(1, 30))
    X = rng.normal(size=(n, d))
    if trial % 2:
        X = np.round(X, int(rng.integers(0, 2)))
    yr = rng.normal(size=n) if trial % 3 else np.round(rng.normal(size=n), 1)
    rows = np.sort(rng.choice(n, int(rng.integers(1, n + 1)), replace=False)).astype(np.int64)
    nc = int(rng.integers(1, d + 1))
    cols = np.sort(rng.choice(d, nc, replace=False)).astype(np.int64)
    md, msl, mss = int(rng.integers(-1, 7)), int(rng.integers(1, 4)), int(rng.integers(2, 6))
    ps = presort_columns(X)
    pv = np.take_along_axis(X.T, ps, axis=1)
    dfs = J.build_tree(X, np.zeros(n, dtype=np.int64), yr, rows, 1, 1, md, mss, msl, nc, cols,
                       np.uint64(1), ps, pv)
    assert _same(dfs, J._reg_tree_levelwise(X, yr, rows, cols, md, mss, msl, ps, pv))


@pytest.mark.parametrize("trial", range(40))
def test_boost_and_forest_twins(trial):
    rng = np.random.default_rng(500 + trial)
    n, d = int(rng.integers(5, 40)), int(rng.integers(1, 20))
    X = np.round(rng.normal(size=(n, d)), 1)
    t = (rng.random(n) < 0.5).astype(float)
    t[:2] = (0, 1)
    args = (X, t, 0.1, int(rng.integers(1, 15)), int(rng.integers(1, 5)), int(rng.integers(1, 3)), 0.1,
            int(rng.integers(1, n + 1)), int(rng.integers(1, d + 1)), np.uint64(trial), presort_columns(X))
    assert _same(J.boost_fit_head(*args), P.boost_fit_head(*args))
    yi = rng.integers(0, 3, n).astype(np.int64)
    args = (X, yi, 3, int(rng.integers(1, 15)), int(rng.integers(-1, 5)), 2, 1, int(rng.integers(1, d + 1)),
            bool(trial % 2), np.uint64(trial))
    fa, fb = J.forest_fit(*args), P.forest_fit(*args)
    assert _same(fa, fb)
    assert np.array_equal(J.ensemble_leaves(*fa[:4], fa[6], args[3], X),
                          P.ensemble_leaves(*fb[:4], fb[6], args[3], X))


@pytest.mark.parametrize("kernel", ["linear", "rbf", "poly"])
def test_smo_twins(kernel):
    rng = np.random.default_rng({"linear": 1, "rbf": 2, "poly": 3}[kernel])
    for _ in range(10):
        n = int(rng.integers(4, 50))
        X = rng.normal(size=(n, 3))
        y = np.where(X[:, 0] + 0.7 * rng.normal(size=n) > 0, 1.0, -1.0)
        y[:2] = (1, -1)
        K = kernel_matrix(X, X, kernel, 0.5, 2, 1.0)
        C = float(rng.choice([0.1, 1.0, 10.0]))
        a = J.smo_solve(K, y, C, 1e-3, 100_000)
        b = P.smo_solve(K, y, C, 1e-3, 100_000)
        assert np.allclose(a[0], b[0], atol=1e-10) and a[2] == b[2]
        assert a[1] == pytest.approx(b[1], abs=1e-10)


def test_fista_twins():
    rng = np.random.default_rng(4)
    for _ in range(5):
        X = rng.normal(size=(40, 5))
        y = np.where(X[:, 1] + rng.normal(size=40) > 0, 1.0, -1.0)
        X1 = np.column_stack([X, np.ones(40)])
        lip = np.linalg.norm(X1, 2) ** 2 / 4.0
        a = J.fista_l1_logistic(X, y, 1.0, lip, 1e-6, 10_000)
        b = P.fista_l1_logistic(X, y, 1.0, lip, 1e-6, 10_000)
        assert np.allclose(a[0], b[0], atol=1e-9) and a[1] == pytest.approx(b[1], abs=1e-9)
        assert a[2] == b[2]


def test_tree_apply_twins():
    fe = np.array([0, -1, 1, -1, -1])
    th = np.array([0.0, 0, 0.5, 0, 0])
    le = np.array([1, -1, 3, -1, -1])
    ri = np.array([2, -1, 4, -1, -1])
    X = np.random.default_rng(0).normal(size=(30, 2))
    assert np.array_equal(J.tree_apply(fe, th, le, ri, X), P.tree_apply(fe, th, le, ri, X))


def test_numpy_fallback_gives_the_same_models():
    script = (
        "import numpy as np\n"
        "from qstrat import _accel, learners\n"
        "from qstrat.learners import LearnerSpec\n"
        "rng = np.random.default_rng(0)\n"
        "X = rng.normal(size=(30, 6)); y = np.array(['a', 'b', 'c'] * 10)\n"
        "hp = {'n_trees': 8, 'subsample': 0.8, 'colsample': 0.5}\n"
        "out = [_accel.backend()]\n"
        "for kind, h in (('GradientBoost', hp), ('RandomForest', {'n_trees': 8}), ('SVM', {})):\n"
        "    out.append(learners.model_to_json(learners.train(LearnerSpec(kind, h, 1), X, y)))\n"
        "print('\\n'.join(out))\n"
    )
    runs = {}
    for flag in ("0", "1"):
        env = {**os.environ, "QSTRAT_NO_NUMBA": flag}
        res = subprocess.run([sys.executable, "-c", script], capture_output=True, text=True, env=env, check=True)
        runs[flag] = res.stdout.splitlines()
    assert runs["0"][0] == "numba" and runs["1"][0] == "numpy"
    assert runs["0"][1:3] == runs["1"][1:3]  # tree ensembles bit-identical
    a, b = (json.loads(runs[f][3]) for f in ("0", "1"))
    alpha = [np.array(m["params"]["heads"][0]["alpha"]["__ndarray__"]) for m in (a, b)]
    assert np.allclose(*alpha, atol=1e-10)


def test_benchmark_smoke(capsys):
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--quick", "--repeat", "1"])
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all(ln.endswith("True") for ln in lines[1:])
