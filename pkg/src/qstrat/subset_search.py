"""Single-feature AUC screening and exhaustive subset search.

Features are ranked by their individual AUC; the best twelve form a pool and
every nonempty subset of the pool is scored by a linear SVM under stratified
k-fold cross-validation with per-fold z-scoring. All subsets share one fold
plan, so their scores are paired comparisons.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import learners
from .errors import DegenerateLabelsError, EnumerationCapError, ParameterError, SchemaError
from .features import FeatureMatrix, zscore_apply_array, zscore_fit_array
from .learners import LearnerSpec
from .metrics import accuracy, auc_binary, mean_roc
from .model_selection import (
    ModelReport,
    fold_auc_and_roc,
    get_task,
    pooled_auc,
    stratified_kfold,
    task_view,
)
from .parallel import ordered_map
from .reporting import csv_text
from .rng import stream_u64

POOL_SIZE = 12
MERGE_TOP = 6
MAX_POOL = 16


@dataclass(frozen=True)
class FeaturePool:
    """Screened features in pool order.

    ``aucs`` are oriented (``max(a, 1 - a)``), ``raw_aucs`` unoriented. For
    a merged pool the AUCs are those of the source pools and ``sources``
    names the pool each feature came from.
    """

    task: str
    features: tuple
    aucs: tuple
    raw_aucs: tuple
    sources: tuple = ()

    def __post_init__(self):
        if len(self.features) > POOL_SIZE:
            raise ParameterError(f"a pool holds at most {POOL_SIZE} features")
        if len(set(self.features)) != len(self.features):
            raise ParameterError("duplicate features in pool")
        if not (len(self.aucs) == len(self.raw_aucs) == len(self.features)):
            raise SchemaError("pool fields differ in length")

    def __len__(self):
        return len(self.features)

    def to_dict(self):
        out = {"task": self.task, "features": [
            {"feature": f, "auc": float(a), "raw_auc": float(r)}
            for f, a, r in zip(self.features, self.aucs, self.raw_aucs)
        ]}
        if self.sources:
            for entry, src in zip(out["features"], self.sources):
                entry["source"] = src
        return out


@dataclass(frozen=True)
class SubsetResult:
    bitmask: int
    features: tuple
    fold_accuracy: tuple
    fold_auc: tuple

    def __post_init__(self):
        if self.bitmask <= 0:
            raise ParameterError("bitmask must be nonzero")

    @property
    def n_features(self):
        return bin(self.bitmask).count("1")

    @property
    def mean_accuracy(self):
        return float(np.mean(self.fold_accuracy))

    @property
    def mean_auc(self):
        return float(np.mean(self.fold_auc))

    def rank_key(self):
        # larger is better: AUC, then fewer features, then lower bitmask
        return (self.mean_auc, -self.n_features, -self.bitmask)


@dataclass
class SearchResult:
    best: SubsetResult
    table: list  # SubsetResult per bitmask 1 .. 2^p - 1
    pool_features: tuple
    plan: object = field(repr=False)
    C: float = 1.0


# --------------------------------------------------------------------------
# screening


def single_feature_auc(column, y, classes):
    """(oriented, raw) AUC of one raw feature column used as the score.

    With three or more classes the column scores every one-vs-rest problem;
    each per-class AUC is oriented before the macro mean is taken.
    """
    column = np.asarray(column, dtype=np.float64)
    if len(classes) == 2:
        a = auc_binary(column, y == classes[1])
        return max(a, 1.0 - a), a
    per = [auc_binary(column, y == c) for c in classes if (y == c).any() and not (y == c).all()]
    if len(per) < 2:
        raise DegenerateLabelsError("need at least two classes")
    return float(np.mean([max(a, 1.0 - a) for a in per])), float(np.mean(per))


def _as_matrix(x, names=None):
    if isinstance(x, FeatureMatrix):
        return np.asarray(x.values, dtype=np.float64), tuple(x.feature_names)
    X = np.asarray(x, dtype=np.float64)
    if X.ndim != 2:
        raise SchemaError("feature array must be 2-D")
    names = tuple(names) if names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise SchemaError("names do not match the number of columns")
    return X, names


def rank_features_by_auc(x, y, task="", names=None, top=POOL_SIZE):
    """Top ``top`` features by oriented single-feature AUC; ties keep column order."""
    X, names = _as_matrix(x, names)
    y = np.asarray(y)
    if y.size != X.shape[0]:
        raise SchemaError("labels do not match rows")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise DegenerateLabelsError("ranking needs at least two classes")
    scored = [single_feature_auc(X[:, j], y, classes) for j in range(X.shape[1])]
    order = sorted(range(X.shape[1]), key=lambda j: (-scored[j][0], j))[:top]
    return FeaturePool(
        str(getattr(get_task(task), "name", task)) if task else "",
        tuple(names[j] for j in order),
        tuple(scored[j][0] for j in order),
        tuple(scored[j][1] for j in order),
    )


def build_multiclass_pool(pool_a, pool_b, task="HC-vs-PIGD-vs-TD", top=MERGE_TOP):
    """Union of the top ``top`` of two pools, refilled to ``2 * top`` features.

    A feature in both top lists is kept once; the pool where it ranked lower
    (ties: the one where its AUC is lower, then ``pool_b``) contributes its
    next unused feature from rank ``top + 1`` on. Order: ``pool_a``'s top,
    then ``pool_b``'s new entries, then refills.
    """
    if len(pool_a) < top or len(pool_b) < top:
        raise ParameterError(f"both pools need at least {top} features")
    names = ("a", "b")
    pools = (pool_a, pool_b)
    merged, entries = [], []

    def add(p, i):
        merged.append(pools[p].features[i])
        entries.append((pools[p].aucs[i], pools[p].raw_aucs[i], pools[p].task or names[p]))

    for i in range(top):
        add(0, i)
    for i in range(top):
        if pool_b.features[i] not in merged:
            add(1, i)
    cursor = [top, top]
    for i, f in enumerate(pool_a.features[:top]):
        if f not in pool_b.features[:top]:
            continue
        j = pool_b.features.index(f)
        if i != j:
            src = 0 if i > j else 1
        else:
            src = 0 if pool_a.aucs[i] < pool_b.aucs[j] else 1
        for p in (src, 1 - src):
            while cursor[p] < len(pools[p]) and pools[p].features[cursor[p]] in merged:
                cursor[p] += 1
            if cursor[p] < len(pools[p]):
                add(p, cursor[p])
                cursor[p] += 1
                break
        else:
            warnings.warn("pools exhausted while refilling; merged pool is short", stacklevel=2)
    return FeaturePool(task, tuple(merged), tuple(e[0] for e in entries),
                       tuple(e[1] for e in entries), tuple(e[2] for e in entries))


# --------------------------------------------------------------------------
# exhaustive search


def _pool_columns(pool, x):
    feats = tuple(pool.features) if isinstance(pool, FeaturePool) else tuple(pool)
    if not feats:
        raise ParameterError("pool is empty")
    if len(feats) > MAX_POOL:
        raise EnumerationCapError(
            f"pool of {len(feats)} features exceeds the cap of {MAX_POOL}; truncate the pool")
    if isinstance(x, FeatureMatrix):
        missing = [f for f in feats if f not in x.feature_names]
        if missing:
            raise SchemaError(f"pool features not in matrix: {missing}")
        idx = [x.feature_names.index(f) for f in feats]
        return feats, np.asarray(x.values, dtype=np.float64)[:, idx]
    X = np.asarray(x, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(feats):
        raise SchemaError("array input must have exactly one column per pool feature")
    return feats, X


def search_plan(y, k, seed, task_id=0):
    """Fold plan shared by all subsets (and by the all-features comparison)."""
    return stratified_kfold(y, k, stream_u64(seed, "outer", task_id))


def _check_plan(plan, y):
    classes = set(np.asarray(y).tolist())
    for f in range(plan.k):
        if set(np.asarray(y)[plan.test_index(f)].tolist()) != classes:
            raise DegenerateLabelsError(f"test fold {f} lacks a class; AUC undefined")


def _prepare_folds(X, plan):
    folds = []
    for tr, te in plan.splits():
        mean, std = zscore_fit_array(X[tr])
        folds.append((tr, te, zscore_apply_array(X[tr], mean, std), zscore_apply_array(X[te], mean, std)))
    return folds


def _score_subset(spec, cols, folds, y, classes):
    accs, aucs, scores = [], [], []
    for tr, te, Ztr, Zte in folds:
        model = learners.train(spec, Ztr[:, cols], y[tr])
        s = learners.decision_scores(model, Zte[:, cols]).scores
        pred = np.asarray(model.classes, dtype=object)[np.argmax(s, axis=1)]
        accs.append(accuracy(pred, y[te]))
        aucs.append(float(fold_auc_and_roc(s, y[te], classes)[0]))
        scores.append(s)
    return accs, aucs, scores


def _bits(mask, p):
    return [i for i in range(p) if mask >> i & 1]


def exhaustive_subset_search(pool, x, y, k=5, seed=0, C=1.0, plan=None, threads=None, task_id=0):
    """Score every nonempty subset of ``pool``; bit ``i`` of a mask is pool entry ``i``."""
    feats, X = _pool_columns(pool, x)
    y = np.asarray(y, dtype=object)
    if y.size != X.shape[0]:
        raise SchemaError("labels do not match rows")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise DegenerateLabelsError("subset search needs at least two classes")
    plan = plan if plan is not None else search_plan(y, k, seed, task_id)
    _check_plan(plan, y)
    folds = _prepare_folds(X, plan)
    spec = LearnerSpec("SVM", {"kernel": "linear", "C": float(C)}, 0)
    p = len(feats)

    def evaluate(mask):
        cols = _bits(mask, p)
        accs, aucs, _ = _score_subset(spec, cols, folds, y, classes)
        return SubsetResult(mask, tuple(feats[i] for i in cols), tuple(accs), tuple(aucs))

    table = ordered_map(evaluate, range(1, 2 ** p), threads)
    best = max(table, key=SubsetResult.rank_key)
    return SearchResult(best, table, feats, plan, float(C))


def subset_table_csv(result, manifest=None):
    k = len(result.table[0].fold_auc)
    header = ["bitmask", "n_features", "features"]
    header += [f"fold{f + 1}_accuracy" for f in range(k)] + [f"fold{f + 1}_auc" for f in range(k)]
    header += ["mean_accuracy", "mean_auc"]
    rows = ([r.bitmask, r.n_features, ";".join(r.features), *r.fold_accuracy, *r.fold_auc,
             r.mean_accuracy, r.mean_auc] for r in result.table)
    return csv_text(header, rows, manifest)


# --------------------------------------------------------------------------
# Approach B


@dataclass
class ApproachBResult:
    report: ModelReport
    pool: FeaturePool | None
    search: SearchResult | None
    pools: dict = field(default_factory=dict)  # source pools of a merged pool

    def summary(self):
        out = {"task": self.report.task, "report": self.report.to_dict()}
        if self.pool is not None:
            out["pool"] = self.pool.to_dict()
        out["source_pools"] = {str(k): v.to_dict() for k, v in self.pools.items()}
        if self.search is not None:
            b = self.search.best
            out["best_subset"] = {
                "bitmask": b.bitmask,
                "n_features": b.n_features,
                "features": list(b.features),
                "fold_accuracy": list(b.fold_accuracy),
                "fold_auc": list(b.fold_auc),
                "mean_accuracy": b.mean_accuracy,
                "mean_auc": b.mean_auc,
                "n_subsets": len(self.search.table),
            }
        return out


def task_pool(task, matrix, rows=None, top=POOL_SIZE, cache=None):
    """Screened pool for ``task`` on ``matrix`` (restricted to ``rows`` if given).

    The three-class pool is always merged from the two binary pools, which are
    taken from ``cache`` when present.
    """
    task = get_task(task)
    sub = matrix if rows is None else matrix.rows(rows)
    cache = {} if cache is None else cache
    if task.id == 3:
        parts = [cache[t] if t in cache else task_pool(t, sub, top=top)[0] for t in (1, 2)]
        cache.update({1: parts[0], 2: parts[1]})
        return build_multiclass_pool(parts[0], parts[1], task.name), cache
    idx, y = task_view(task, sub)
    pool = rank_features_by_auc(sub.rows(idx), y, task, top=top)
    return pool, cache


def _fit_score(cols, X, y, tr, te, C):
    mean, std = zscore_fit_array(X[tr][:, cols])
    spec = LearnerSpec("SVM", {"kernel": "linear", "C": float(C)}, 0)
    model = learners.train(spec, zscore_apply_array(X[tr][:, cols], mean, std), y[tr])
    Zte = zscore_apply_array(X[te][:, cols], mean, std)
    return model, learners.decision_scores(model, Zte).scores


def _winner_report(task, y, X, names, plan, cols, C, fold_acc, fold_auc, extra):
    classes = sorted(set(y.tolist()))
    rocs, all_scores, imps = [], [], []
    for f, (tr, te) in enumerate(plan.splits()):
        model, s = _fit_score(cols[f], X, y, tr, te, C)
        rocs.append(fold_auc_and_roc(s, y[te], classes)[1])
        all_scores.append(s)
    truth = np.concatenate([y[te] for _, te in plan.splits()])
    return ModelReport(
        task=task.name,
        approach="B",
        learner="SVM",
        classes=classes,
        fold_accuracy=list(fold_acc),
        fold_auc=list(fold_auc),
        fold_hyperparameters=[{"kernel": "linear", "C": float(C)}] * plan.k,
        fold_roc=rocs,
        mean_roc=mean_roc(rocs),
        pooled_auc=pooled_auc(np.vstack(all_scores), truth, classes),
        feature_importance=None,
        extra=extra,
    )


def run_approach_b(task, x, k=5, seed=0, C=1.0, leakfree=False, pools=None, inner_k=3, threads=None):
    """Screen, search and report; ``pools`` may hold cached binary pools keyed 1 and 2.

    By default the ranking uses every subject of the task (as a screening step
    ahead of cross-validation). With ``leakfree`` the ranking and the subset
    search run inside each outer training fold (inner ``inner_k``-fold search)
    and the winner is scored on the untouched test fold.
    """
    task = get_task(task)
    rows, y = task_view(task, x)
    sub = x.rows(rows)
    X = np.asarray(sub.values, dtype=np.float64)
    names = list(sub.feature_names)
    plan = search_plan(y, k, seed, task.id)
    _check_plan(plan, y)

    if not leakfree:
        cache = dict(pools or {})
        pool, cache = task_pool(task, x, cache=cache)
        search = exhaustive_subset_search(pool, sub, y, plan=plan, C=C, threads=threads)
        best = search.best
        cols = [names.index(f) for f in best.features]
        extra = {
            "ranking": "full-cohort",
            "pool": list(pool.features),
            "selected_features": list(best.features),
            "best_bitmask": best.bitmask,
            "n_subsets": len(search.table),
        }
        report = _winner_report(task, y, X, names, plan, [cols] * k, C,
                                best.fold_accuracy, best.fold_auc, extra)
        return ApproachBResult(report, pool, search, {t: cache[t] for t in (1, 2) if task.id == 3})

    classes = sorted(set(y.tolist()))
    fold_cols, accs, aucs, chosen = [], [], [], []
    for f, (tr, te) in enumerate(plan.splits()):
        train = sub.rows(tr)
        pool, _ = task_pool(task, train)
        ytr = y[tr]
        inner = stratified_kfold(ytr, inner_k, stream_u64(seed, "leakfree", task.id, f))
        search = exhaustive_subset_search(pool, train, ytr, plan=inner, C=C, threads=threads)
        cols = [names.index(n) for n in search.best.features]
        model, s = _fit_score(cols, X, y, tr, te, C)
        pred = np.asarray(model.classes, dtype=object)[np.argmax(s, axis=1)]
        accs.append(accuracy(pred, y[te]))
        aucs.append(float(fold_auc_and_roc(s, y[te], classes)[0]))
        fold_cols.append(cols)
        chosen.append({"pool": list(pool.features), "selected_features": list(search.best.features)})
    extra = {"ranking": "within-fold", "folds": chosen}
    report = _winner_report(task, y, X, names, plan, fold_cols, C, accs, aucs, extra)
    return ApproachBResult(report, None, None)
