"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the collected lines are
repeated in the terminal summary under "acceptance criteria".
"""
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    cart_oracle,
    cart_predict,
    gd_logreg_l2,
    ista_logreg_l1,
    kernel_preorder,
    naive_stats,
    pairwise_auc,
    preorder,
)
from qstrat import cli, learners, model_selection as ms, subset_search as ss, synthcohort as sc
from qstrat.features import (
    MAPS,
    METRICS,
    ROIS,
    extract_subject,
    matrix_from_csv,
    roi_statistics,
)
from qstrat.learners import LearnerSpec
from qstrat.learners.svm import KKT_TOL, kernel_matrix
from qstrat.metrics import auc_binary, auc_ovr_macro, ovr_auc_per_class
from qstrat.volume_io import LabelMap, dice

pytestmark = pytest.mark.acceptance


# --------------------------------------------------------------------------
# 1


def test_c01_feature_vector_structure(criterion):
    t0 = time.perf_counter()
    cfg = replace(sc.default_table1_config(3), mode="phantom-volumes",
                  n_per_class={"HC": 1, "PIGD": 0, "TD": 0}, phantom_inplane=48)
    cohort = sc.generate(cfg)
    maps, labels = cohort.phantoms[0]
    vec = extract_subject("S1", "HC", maps, [labels], cohort.tiv[0])
    elapsed = time.perf_counter() - t0

    expected = [f"{r}_volume" for r in ROIS]
    expected += [f"{r}_{m}_{s}" for r in ROIS for m in MAPS for s in METRICS]
    ok = (len(vec.values) == 225 and list(vec.feature_names) == expected
          and np.allclose(vec.values, cohort.matrix.values[0], rtol=0, atol=1e-9)
          and elapsed < 1.0)
    criterion(1, "225 features in canonical order", ok, f"n={len(vec.values)} t={elapsed:.2f}s")


# --------------------------------------------------------------------------
# 2


def _close(a, b, scale):
    return abs(a - b) <= 1e-9 * max(abs(b), scale)


def test_c02_statistics_oracle(criterion):
    rng = np.random.default_rng(20240902)
    inputs = []
    for i in range(1000):
        n = int(np.exp(rng.uniform(0, np.log(10_000)))) if i % 10 else int(rng.integers(1, 10_001))
        kind = i % 5
        if kind == 0:
            x = rng.normal(rng.normal(0, 50), rng.uniform(0.01, 30), n)
        elif kind == 1:
            x = rng.exponential(rng.uniform(0.1, 5), n)
        elif kind == 2:
            x = rng.integers(-5, 6, n).astype(float)  # heavy ties
        elif kind == 3:
            x = np.full(n, rng.normal())
        else:
            x = rng.standard_t(3, n) * 100 + 7
        inputs.append(x)

    t0 = time.perf_counter()
    ours = [roi_statistics(x) for x in inputs]
    elapsed = time.perf_counter() - t0

    bad = []
    for x, s in zip(inputs, ours):
        ref = naive_stats(x)
        span = float(np.max(np.abs(x)))
        for m in METRICS:
            # relative error, floored at the data magnitude (or 1 for shape statistics)
            scale = 1.0 if m in ("skewness", "kurtosis") else span
            if not _close(getattr(s, m), ref[m], scale):
                bad.append((x.size, m, getattr(s, m), ref[m]))
    ok = not bad and elapsed < 10.0
    criterion(2, "ROI statistics vs naive oracle (1e-9)", ok, f"mismatches={len(bad)} t={elapsed:.2f}s")


# --------------------------------------------------------------------------
# 3


def test_c03_auc_oracle(criterion):
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    worst_bin = worst_ovr = 0.0
    for i in range(1000):
        n = int(rng.integers(2, 201))
        levels = int(rng.integers(2, 12)) if i % 2 else 0
        s = rng.integers(0, levels, n).astype(float) if levels else rng.normal(size=n)
        y = rng.random(n) < rng.uniform(0.2, 0.8)
        y[0], y[-1] = True, False
        worst_bin = max(worst_bin, abs(auc_binary(s, y) - pairwise_auc(s, y)))

        if n >= 6:
            k = int(rng.integers(3, 5))
            labels = np.array([f"c{j}" for j in rng.integers(0, k, n)])
            labels[:k] = [f"c{j}" for j in range(k)]
            classes = [f"c{j}" for j in range(k)]
            S = rng.integers(0, 6, (n, k)).astype(float) if i % 3 == 0 else rng.normal(size=(n, k))
            per, _ = ovr_auc_per_class(S, labels, classes)
            direct = np.mean([pairwise_auc(S[:, j], labels == c) for j, c in enumerate(classes)])
            macro = auc_ovr_macro(S, labels, classes)
            worst_ovr = max(worst_ovr, abs(macro - np.mean(list(per.values()))), abs(macro - direct))
    elapsed = time.perf_counter() - t0
    ok = worst_bin <= 1e-12 and worst_ovr <= 1e-12 and elapsed < 30.0
    criterion(3, "AUC vs pairwise oracle, OvR macro = mean", ok,
              f"max_err_bin={worst_bin:.1e} max_err_ovr={worst_ovr:.1e} t={elapsed:.2f}s")


# --------------------------------------------------------------------------
# 4


def test_c04_dice_identities(criterion):
    names = {1: "SN", 2: "RN"}
    a = np.zeros((4, 3, 2), dtype=np.int64)
    a[0, 0, 0] = a[1, 0, 0] = 1
    b = np.zeros_like(a)
    b[1, 0, 0] = b[2, 0, 0] = 1
    c = np.zeros_like(a)
    c[3, 2, 1] = c[2, 2, 1] = 1
    A, B, Cm = (LabelMap(m, (1, 1, 1), names) for m in (a, b, c))
    rng = np.random.default_rng(0)
    R = LabelMap(rng.integers(0, 3, (5, 6, 7)), (1, 1, 1), names)
    vals = (dice(A, A, 1), dice(R, R, 1), dice(R, R, 2), dice(A, Cm, 1), dice(A, B, 1))
    ok = vals[:3] == (1.0, 1.0, 1.0) and vals[3] == 0.0 and vals[4] == 0.5
    criterion(4, "Dice identities", ok, f"values={vals}")


# --------------------------------------------------------------------------
# 5


def _naive_search(X, y, feats, plan):
    """Sequential re-derivation of the subset table and winner."""
    classes = sorted(set(y.tolist()))
    spec = LearnerSpec("SVM", {"kernel": "linear", "C": 1.0}, 0)
    p = len(feats)
    rows = []
    for mask in range(1, 2 ** p):
        cols = [i for i in range(p) if mask >> i & 1]
        accs, aucs = [], []
        for f in range(plan.k):
            te = plan.assignments == f
            tr = ~te
            mu = X[tr].mean(axis=0)
            sd = X[tr].std(axis=0)
            Ztr = ((X[tr] - mu) / sd)[:, cols]
            Zte = ((X[te] - mu) / sd)[:, cols]
            model = learners.train(spec, Ztr, y[tr])
            S = learners.decision_scores(model, Zte).scores
            pred = np.array(classes, dtype=object)[np.argmax(S, axis=1)]
            accs.append(float(np.mean(pred == y[te])))
            if len(classes) == 2:
                aucs.append(auc_binary(S[:, 1], y[te] == classes[1]))
            else:
                aucs.append(auc_ovr_macro(S, y[te], classes))
        rows.append((mask, tuple(feats[i] for i in cols), tuple(accs), tuple(aucs)))
    best = max(rows, key=lambda r: (float(np.mean(r[3])), -len(r[1]), -r[0]))
    return rows, best


def test_c05_subset_search_oracle(criterion):
    rng = np.random.default_rng(5)
    mismatches = []
    t_p8 = None
    for p, n, k_cls in ((1, 30, 2), (3, 40, 3), (5, 44, 2), (8, 60, 2)):
        y = np.array(([f"k{j}" for j in range(k_cls)] * n)[:n], dtype=object)
        X = rng.normal(size=(n, p))
        X[:, 0] += 0.8 * (y == "k1")
        feats = tuple(f"f{i}" for i in range(p))
        plan = ss.search_plan(y, 5, seed=p)
        t0 = time.perf_counter()
        res = ss.exhaustive_subset_search(feats, X, y, plan=plan)
        if p == 8:
            t_p8 = time.perf_counter() - t0
        rows, best = _naive_search(X, y, feats, plan)
        got = [(r.bitmask, r.features, r.fold_accuracy, r.fold_auc) for r in res.table]
        won = (res.best.bitmask, res.best.features, res.best.fold_accuracy, res.best.fold_auc)
        if got != rows or won != best:
            mismatches.append(p)

    y12 = np.array(["a", "b"] * 22, dtype=object)
    X12 = rng.normal(size=(44, 12))
    res12 = ss.exhaustive_subset_search(tuple(f"g{i}" for i in range(12)), X12, y12, seed=1)
    masks = [r.bitmask for r in res12.table]
    ok = not mismatches and masks == list(range(1, 4096)) and t_p8 < 120.0
    criterion(5, "subset search vs naive, p=12 -> 4095 rows", ok,
              f"mismatch_p={mismatches} rows12={len(masks)} t_p8={t_p8:.1f}s")


# --------------------------------------------------------------------------
# 6


def test_c06_stratification(criterion):
    t0 = time.perf_counter()
    matrix = sc.generate(sc.default_table1_config(0)).matrix
    spread_ok = True
    for task in (1, 2, 3):
        _, y = ms.task_view(task, matrix)
        for seed in range(100):
            plan = ss.search_plan(y, 5, seed, task)
            for cls in set(y.tolist()):
                per_fold = np.bincount(plan.assignments[y == cls], minlength=5)
                spread_ok &= int(per_fold.max() - per_fold.min()) <= 1
    t_plans = time.perf_counter() - t0

    defined = True
    grid = {"LogReg": {"penalty": ["l2"], "C": [1.0]}}
    for task in (1, 2, 3):
        rep = ms.run_approach_a(task, matrix, kinds=["LogReg"], grids=grid, seed=0)[0]
        defined &= len(rep.fold_auc) == 5 and all(np.isfinite(a) for a in rep.fold_auc)
    ok = bool(spread_ok and defined and t_plans < 1.0)
    criterion(6, "stratified folds on 21/14/9, AUC defined per fold", ok,
              f"balanced={bool(spread_ok)} defined={bool(defined)} t_plans={t_plans:.2f}s")


# --------------------------------------------------------------------------
# 7


def _logreg_fits(rng):
    worst = 0.0
    for trial in range(6):
        n, d = 60, 4
        X = rng.normal(size=(n, d))
        yb = np.where(X @ rng.normal(size=d) + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
        labels = np.where(yb > 0, "b", "a")
        C = (0.1, 1.0, 10.0)[trial % 3]
        penalty = "l2" if trial < 3 else "l1"
        model = learners.train(LearnerSpec("LogReg", {"penalty": penalty, "C": C}), X, labels)
        head = model.params["heads"][0]
        w_ref, b_ref = (gd_logreg_l2 if penalty == "l2" else ista_logreg_l1)(X, yb, C)
        worst = max(worst, float(np.max(np.abs(head["coef"] - w_ref))), abs(head["intercept"] - b_ref))
    return worst


def _svm_kkt(rng):
    bad = 0
    for trial in range(20):
        n, d = int(rng.integers(10, 60)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, d))
        yi = (X[:, 0] + rng.normal(size=n) > 0).astype(int)
        yi[:2] = [0, 1]
        kernel = ("linear", "rbf", "poly")[trial % 3]
        C = (0.1, 1.0, 10.0)[trial % 3 if trial % 2 else 1]
        model = learners.train(LearnerSpec("SVM", {"kernel": kernel, "C": C}), X, yi)
        head = model.params["heads"][0]
        alpha = head["alpha"]
        yb = np.where(yi == 1, 1.0, -1.0)
        p = model.params
        K = kernel_matrix(X, X, kernel, p["gamma"], p["degree"], p["coef0"])
        yf = yb * (K @ (alpha * yb) - head["rho"])
        box = np.all(alpha >= 0) and np.all(alpha <= C) and abs(alpha @ yb) <= 1e-8 * max(1.0, C * n)
        lower = alpha <= 1e-12
        upper = alpha >= C - 1e-12
        free = ~lower & ~upper
        kkt = (np.all(yf[lower] >= 1 - KKT_TOL) and np.all(yf[upper] <= 1 + KKT_TOL)
               and np.all(np.abs(yf[free] - 1) <= KKT_TOL))
        bad += not (box and kkt)
    return bad


def _tree_mismatches(rng):
    bad = 0
    hp = {"n_trees": 1, "bootstrap": False, "max_features": "all", "max_depth": None}
    for trial in range(150):
        n, d = int(rng.integers(2, 51)), int(rng.integers(1, 5))
        k = int(rng.integers(2, 4))
        X = np.round(rng.normal(size=(n, d)), int(rng.integers(0, 3)))
        y = rng.integers(0, k, n)
        y[:k] = np.arange(k) if n >= k else y[:k]
        if len(set(y.tolist())) < 2:
            continue
        model = learners.train(LearnerSpec("RandomForest", hp, trial), X, y)
        p = model.params
        classes, yi = np.unique(y, return_inverse=True)
        ref = cart_oracle(X, yi, classes.size)
        same_tree = kernel_preorder(p["feature"], p["threshold"], p["left"], p["right"]) == preorder(ref)
        Q = np.vstack([X, rng.normal(size=(20, d))])
        ours = learners.predict(model, Q)
        theirs = classes[[cart_predict(ref, q) for q in Q]]
        bad += not (same_tree and np.array_equal(ours.astype(theirs.dtype), theirs))
    return bad


def test_c07_learner_correctness(criterion):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    lr_err = _logreg_fits(rng)
    svm_bad = _svm_kkt(rng)
    tree_bad = _tree_mismatches(rng)
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 3, 40)
    knn_ok = True
    for metric in ("euclidean", "manhattan"):
        for weights in ("uniform", "distance"):
            m = learners.train(LearnerSpec("KNN", {"n_neighbors": 1, "metric": metric, "weights": weights}), X, y)
            knn_ok &= bool(np.mean(learners.predict(m, X) == y) == 1.0)
    elapsed = time.perf_counter() - t0
    ok = lr_err <= 1e-4 and svm_bad == 0 and tree_bad == 0 and knn_ok and elapsed < 60.0
    criterion(7, "LogReg/SVM/CART/KNN oracles", ok,
              f"logreg_err={lr_err:.1e} svm_fail={svm_bad} tree_fail={tree_bad} knn={knn_ok} t={elapsed:.1f}s")


# --------------------------------------------------------------------------
# 8


def test_c08_table1_fidelity(criterion, tmp_path):
    cfg_path = tmp_path / "n100.json"
    cfg_path.write_text(json.dumps({"n_per_class": {c: 100 for c in sc.CLASSES}}))
    t0 = time.perf_counter()
    code = cli.main(["cohort", "--config", str(cfg_path), "--seed", "0", "--out", str(tmp_path / "c")])
    matrix = matrix_from_csv(tmp_path / "c" / "features.csv")
    elapsed = time.perf_counter() - t0
    labels = np.array(matrix.labels)
    names = list(matrix.feature_names)
    vol_ok = map_ok = 0
    for cls, rois in sc.TABLE1.items():
        rows = labels == cls
        for roi, (vol, *values) in rois.items():
            got = matrix.values[rows, names.index(f"{roi}_volume")].mean()
            vol_ok += abs(got - vol[0] * 1e3) <= 3 * vol[1] * 1e3 / np.sqrt(100)
            for m, (mu, sd) in zip(MAPS, values):
                got = matrix.values[rows, names.index(f"{roi}_{m}_mean")].mean()
                map_ok += abs(got - mu) <= 3 * sd / np.sqrt(100)
    ok = code == 0 and vol_ok == 27 and map_ok == 81 and elapsed < 30.0
    criterion(8, "synthetic cohort matches Table 1 at n=100/class", ok,
              f"volume_rows={vol_ok}/27 map_rows={map_ok}/81 t={elapsed:.1f}s")


# --------------------------------------------------------------------------
# 9

EFFECT_FEATURES = ("SN_volume", "putamen_volume", "SN_QSM_skewness", "RN_R2star_kurtosis")


def effect_cohort(seed):
    effects = tuple(sc.Effect(f, cls, 1.5) for f in EFFECT_FEATURES for cls in ("PIGD", "TD"))
    cfg = replace(sc.default_table1_config(seed).with_shared_parameters("HC"), injected_effects=effects)
    return sc.generate(cfg).matrix


def test_c09_selection_beats_all_features(criterion):
    t0 = time.perf_counter()
    wins, pairs = 0, []
    linear = {"SVM": {"kernel": ["linear"], "C": [1.0]}}
    for seed in range(20):
        m = effect_cohort(seed)
        b = ss.run_approach_b(1, m, seed=seed).report.mean_auc
        a = ms.run_approach_a(1, m, kinds=["SVM"], grids=linear, seed=seed)[0].mean_auc
        wins += b > a
        pairs.append((round(b, 3), round(a, 3)))
    elapsed = time.perf_counter() - t0
    ok = wins >= 18 and elapsed < 600.0
    criterion(9, "Approach B beats A linear-SVM all-features", ok,
              f"wins={wins}/20 t={elapsed:.0f}s (B,A)={pairs}")


# --------------------------------------------------------------------------
# 10

NULL_SCALE = 2  # subjects per class = NULL_SCALE x (21, 14, 9)


def test_c10_null_calibration(criterion):
    t0 = time.perf_counter()
    inside = {k: 0 for k in learners.KINDS}
    worst = {k: [] for k in learners.KINDS}
    for seed in range(20):
        cfg = sc.default_table1_config(seed).with_shared_parameters("HC")
        cfg = replace(cfg, n_per_class={c: NULL_SCALE * n for c, n in sc.PAPER_COUNTS.items()})
        for rep in ms.run_approach_a(1, sc.generate(cfg).matrix, seed=seed):
            inside[rep.learner] += 0.3 <= rep.mean_auc <= 0.7
            worst[rep.learner].append(rep.mean_auc)
    elapsed = time.perf_counter() - t0
    ok = all(v >= 19 for v in inside.values()) and elapsed < 600.0
    ranges = {k: (round(min(v), 3), round(max(v), 3)) for k, v in worst.items()}
    criterion(10, "null cohort AUC in [0.3, 0.7]", ok,
              f"in_range={inside} range={ranges} t={elapsed:.0f}s")


# --------------------------------------------------------------------------
# 11

SMALL_GRIDS = {
    "SVM": {"C": [1, 10], "kernel": ["linear", "rbf"]},
    "LogReg": {"penalty": ["l1", "l2"], "C": [1]},
    "RandomForest": {"n_trees": [20, 40], "max_depth": [None, 3]},
    "GradientBoost": {"n_trees": [10, 20], "max_depth": [2], "subsample": [0.8], "colsample": [0.8]},
    "KNN": {"n_neighbors": [1, 3], "weights": ["uniform", "distance"]},
}


def _tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c11_determinism(criterion, tmp_path, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    t0 = time.perf_counter()
    run_cfg = tmp_path / "run.json"
    run_cfg.write_text(json.dumps({"grids": SMALL_GRIDS}))
    ph_cfg = tmp_path / "phantom.json"
    ph_cfg.write_text(json.dumps({"mode": "phantom-volumes", "phantom_inplane": 32,
                                  "n_per_class": {"HC": 1, "PIGD": 1, "TD": 1}}))
    codes, same = [], []

    def twice(args_of, threads=(None, None)):
        outs = []
        for i, th in enumerate(threads):
            out = tmp_path / f"{args_of.__name__}{i}"
            argv = args_of(out) + ([] if th is None else ["--threads", str(th)])
            codes.append(cli.main(argv))
            outs.append(_tree_bytes(out) if out.is_dir() else {"file": out.read_bytes()})
        same.append(bool(outs[0]) and outs[0] == outs[1])

    def cohort(out):
        return ["cohort", "--table1-defaults", "--seed", "11", "--out", str(out)]

    def phantom(out):
        return ["cohort", "--config", str(ph_cfg), "--seed", "3", "--out", str(out)]

    twice(cohort)
    twice(phantom)
    feats = tmp_path / "cohort0" / "features.csv"

    def extract(out):
        return ["extract", "--subjects", str(tmp_path / "phantom0" / "subjects.json"), "--out", str(out)]

    twice(extract)

    def run_a(out):
        return ["run", "--task", "3", "--approach", "A", "--features", str(feats),
                "--config", str(run_cfg), "--seed", "5", "--out", str(out)]

    twice(run_a, threads=(1, 3))

    def run_b(out):
        return ["run", "--task", "2", "--approach", "B", "--features", str(feats),
                "--seed", "5", "--out", str(out)]

    twice(run_b, threads=(1, 2))
    monkeypatch.setenv("QSTRAT_THREADS", "2")
    env_out = tmp_path / "run_b_env"
    codes.append(cli.main(run_b(env_out)))
    same.append(_tree_bytes(env_out) == _tree_bytes(tmp_path / "run_b0"))
    elapsed = time.perf_counter() - t0
    ok = all(c == 0 for c in codes) and all(same) and elapsed < 60.0
    criterion(11, "byte-identical reruns across --threads", ok,
              f"exit={sorted(set(codes))} identical={same} t={elapsed:.1f}s")
