"""Tasks, stratified folds, grid search and the all-features evaluation.

Every outer fold z-scores with statistics of its own training rows, tunes
each learner by inner stratified cross-validation on those rows only, refits
the winning configuration and scores the held-out rows.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import learners
from .errors import DegenerateLabelsError, ParameterError, QStratError, SearchError
from .features import zscore_apply_array, zscore_fit_array
from .learners import KINDS, SCHEMAS, SVM_KERNEL_PARAMS, LearnerSpec
from .metrics import (
    accuracy,
    auc_binary,
    auc_ovr_macro,
    mean_roc,
    roc_binary,
    roc_ovr_macro,
)
from .parallel import ordered_map
from .rng import stream, stream_u64


@dataclass(frozen=True)
class Task:
    id: int
    name: str
    mapping: dict  # raw label -> task class; unmapped labels are dropped


TASKS = {
    1: Task(1, "HC-vs-PwP", {"HC": "HC", "PIGD": "PwP", "TD": "PwP", "Indeterminate": "PwP", "PwP": "PwP"}),
    2: Task(2, "PIGD-vs-TD", {"PIGD": "PIGD", "TD": "TD"}),
    3: Task(3, "HC-vs-PIGD-vs-TD", {"HC": "HC", "PIGD": "PIGD", "TD": "TD"}),
}


def get_task(task):
    if isinstance(task, Task):
        return task
    for t in TASKS.values():
        if task == t.id or task == t.name or str(task) == str(t.id):
            return t
    raise ParameterError(f"unknown task {task!r}")


def task_view(task, matrix):
    """Rows of ``matrix`` that take part in ``task`` and their task labels."""
    task = get_task(task)
    keep = [i for i, lab in enumerate(matrix.labels) if lab in task.mapping]
    y = np.array([task.mapping[matrix.labels[i]] for i in keep], dtype=object)
    if len(set(y.tolist())) < 2:
        raise DegenerateLabelsError(f"task {task.name}: fewer than two classes after filtering")
    return np.array(keep, dtype=np.int64), y


# --------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_index(self, fold):
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold):
        return np.flatnonzero(self.assignments != fold)

    def splits(self):
        return [(self.train_index(f), self.test_index(f)) for f in range(self.k)]


def stratified_kfold(labels, k, seed=0):
    """Shuffle each class, concatenate the classes and deal positions round-robin.

    Per-class counts across folds therefore differ by at most one, as do the
    fold sizes.
    """
    labels = np.asarray(labels)
    n = labels.size
    if k < 2:
        raise ParameterError("k must be at least 2")
    if k > n:
        raise ParameterError(f"k={k} exceeds the number of samples {n}")
    sequence = []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            warnings.warn(f"class {cls!r} has {idx.size} < {k} members; some folds lack it", stacklevel=2)
        sequence.extend(stream(seed, "kfold", k, cls).permutation(idx).tolist())
    assignments = np.empty(n, dtype=np.int64)
    assignments[np.array(sequence, dtype=np.int64)] = np.arange(n) % k
    return FoldPlan(k, assignments, int(seed))


# --------------------------------------------------------------------------
# grids

DEFAULT_GRIDS = {
    "SVM": {
        "C": [0.01, 0.1, 1, 10, 100],
        "kernel": ["linear", "rbf", "poly"],
        "gamma": [0.001, 0.01, 0.1, "1/d"],
        "degree": [2, 3],
    },
    "LogReg": {"penalty": ["l1", "l2"], "C": [0.01, 0.1, 1, 10, 100]},
    "RandomForest": {
        "n_trees": [100, 300],
        "max_depth": [None, 5, 10],
        "min_samples_split": [2, 5],
        "min_samples_leaf": [1, 2],
    },
    "GradientBoost": {
        "n_trees": [100, 300],
        "max_depth": [3, 5],
        "learning_rate": [0.05, 0.1],
        "subsample": [0.8, 1.0],
        "colsample": [0.8, 1.0],
    },
    "KNN": {
        "n_neighbors": [3, 5, 7, 9],
        "weights": ["uniform", "distance"],
        "metric": ["euclidean", "manhattan"],
    },
}


def expand_grid(kind, grid):
    """Cartesian configurations in schema order, candidates in listed order.

    SVM parameters that a kernel ignores are reset to their default and the
    resulting duplicates dropped, keeping the first occurrence.
    """
    if kind not in SCHEMAS:
        raise ParameterError(f"unknown learner kind {kind!r}")
    names = [n for n in SCHEMAS[kind] if n in grid]
    extra = set(grid) - set(SCHEMAS[kind])
    if extra:
        raise ParameterError(f"{kind}: grid names unknown hyperparameters {sorted(extra)}")
    for n in names:
        if not list(grid[n]):
            raise ParameterError(f"{kind}: empty candidate list for {n}")
    configs, seen = [], set()
    for combo in itertools.product(*(list(grid[n]) for n in names)):
        hp = dict(zip(names, combo))
        if kind == "SVM":
            relevant = SVM_KERNEL_PARAMS[hp.get("kernel", SCHEMAS["SVM"]["kernel"][0])]
            hp = {n: v for n, v in hp.items() if n in ("C", "kernel") or n in relevant}
        hp = learners.normalize_hyperparameters(kind, hp)
        key = repr(sorted(hp.items(), key=lambda kv: kv[0]))
        if key not in seen:
            seen.add(key)
            configs.append(hp)
    return configs


@dataclass
class GridResult:
    best: dict
    table: list  # (hyperparameters, mean inner accuracy or None if skipped)


def grid_search(kind, grid, x_train, y_train, inner_k=3, seed=0, learner_seed=None):
    """Configuration with the highest mean inner-fold validation accuracy.

    Ties go to the first configuration in enumeration order.
    """
    X = np.asarray(getattr(x_train, "values", x_train), dtype=np.float64)
    y = np.asarray(y_train)
    configs = expand_grid(kind, grid) if isinstance(grid, dict) else list(grid)
    if not configs:
        raise ParameterError("grid is empty")
    lseed = stream_u64(seed, "learner", kind) if learner_seed is None else learner_seed
    if len(configs) == 1:
        return GridResult(configs[0], [(configs[0], None)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plan = stratified_kfold(y, inner_k, stream_u64(seed, "inner"))
    splits = plan.splits()
    # ensemble configs differing only in n_trees share one fit of the largest
    groups = {}
    for i, hp in enumerate(configs):
        if kind in learners.ENSEMBLE_KINDS:
            key = repr(sorted((k, v) for k, v in hp.items() if k != "n_trees"))
        else:
            key = i
        groups.setdefault(key, []).append(i)
    accs = [None] * len(configs)
    for members in groups.values():
        big = max(members, key=lambda i: configs[i]["n_trees"]) if kind in learners.ENSEMBLE_KINDS else members[0]
        spec = LearnerSpec(kind, configs[big], lseed)
        per = {i: [] for i in members}
        try:
            for tr, va in splits:
                model = learners.train(spec, X[tr], y[tr])
                for i in members:
                    m = model if i == big else learners.truncate(model, configs[i]["n_trees"])
                    per[i].append(accuracy(learners.predict(m, X[va]), y[va]))
        except (QStratError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            for i in members:
                warnings.warn(f"{kind} {configs[i]} skipped: {exc}", stacklevel=2)
            continue
        for i in members:
            accs[i] = float(np.mean(per[i]))
    table = list(zip(configs, accs))
    best, best_acc = None, -np.inf
    for hp, acc in table:
        if acc is not None and acc > best_acc:
            best, best_acc = hp, acc
    if best is None:
        raise SearchError(f"{kind}: every grid configuration failed")
    return GridResult(best, table)


# --------------------------------------------------------------------------
# reports


@dataclass
class ModelReport:
    task: str
    approach: str
    learner: str
    classes: list
    fold_accuracy: list
    fold_auc: list
    fold_hyperparameters: list
    fold_roc: list = field(repr=False)
    mean_roc: object = field(repr=False)
    pooled_auc: float | None = None
    feature_importance: list | None = None
    extra: dict = field(default_factory=dict)
    fold_zscore: list = field(default_factory=list, repr=False, compare=False)

    @property
    def mean_accuracy(self):
        return float(np.mean(self.fold_accuracy))

    @property
    def mean_auc(self):
        return float(np.mean(self.fold_auc))

    def to_dict(self):
        return {
            "task": self.task,
            "approach": self.approach,
            "learner": self.learner,
            "classes": list(self.classes),
            "fold_accuracy": [float(v) for v in self.fold_accuracy],
            "fold_auc": [float(v) for v in self.fold_auc],
            "mean_accuracy": self.mean_accuracy,
            "mean_auc": self.mean_auc,
            "pooled_auc": self.pooled_auc,
            "fold_hyperparameters": self.fold_hyperparameters,
            "mean_roc": {"fpr": self.mean_roc.fpr.tolist(), "tpr": self.mean_roc.tpr.tolist()},
            "feature_importance": self.feature_importance,
            **self.extra,
        }


def fold_auc_and_roc(scores, y_true, classes):
    """AUC and ROC of one held-out fold: binary uses the second class as positive."""
    if len(classes) == 2:
        pos = y_true == classes[1]
        return auc_binary(scores[:, 1], pos), roc_binary(scores[:, 1], pos)
    return auc_ovr_macro(scores, y_true, classes), roc_ovr_macro(scores, y_true, classes)


def pooled_auc(scores, y_true, classes):
    try:
        return float(fold_auc_and_roc(scores, y_true, classes)[0])
    except DegenerateLabelsError:
        return None


def importance_ranking(weights, names):
    order = sorted(range(len(names)), key=lambda i: (-weights[i], i))
    return [{"feature": names[i], "weight": float(weights[i])} for i in order]


def _evaluate_fold(kind, grid, X, y, train_idx, test_idx, fold, seed, inner_k, zscore_rows):
    mean, std = zscore_fit_array(X[zscore_rows if zscore_rows is not None else train_idx])
    Xtr = zscore_apply_array(X[train_idx], mean, std)
    Xte = zscore_apply_array(X[test_idx], mean, std)
    fseed = stream_u64(seed, "approach-a", kind, fold)
    lseed = stream_u64(seed, "learner", kind, fold)
    gs = grid_search(kind, grid, Xtr, y[train_idx], inner_k=inner_k, seed=fseed, learner_seed=lseed)
    model = learners.train(LearnerSpec(kind, gs.best, lseed), Xtr, y[train_idx])
    scores = learners.decision_scores(model, Xte).scores
    pred = learners.predict(model, Xte)
    imp = learners.feature_importance(model)
    return {
        "hyperparameters": gs.best,
        "scores": scores,
        "classes": model.classes,
        "accuracy": accuracy(pred, y[test_idx]),
        "importance": None if imp is None else imp.weights,
        "zscore": (mean, std),
    }


def run_approach_a(task, x, kinds=KINDS, grids=None, k=5, seed=0, inner_k=3,
                   whole_cohort_zscore=False, threads=None):
    """Evaluate every learner kind on all features; one ModelReport per kind."""
    task = get_task(task)
    rows, y = task_view(task, x)
    X = np.asarray(x.values, dtype=np.float64)[rows]
    names = list(x.feature_names)
    grids = {**DEFAULT_GRIDS, **(grids or {})}
    plan = stratified_kfold(y, k, stream_u64(seed, "outer", task.id))
    splits = plan.splits()
    zrows = np.arange(X.shape[0]) if whole_cohort_zscore else None

    jobs = [(kind, f) for kind in kinds for f in range(k)]

    def run(job):
        kind, f = job
        tr, te = splits[f]
        return _evaluate_fold(kind, grids[kind], X, y, tr, te, f, seed, inner_k, zrows)

    results = ordered_map(run, jobs, threads)
    classes = sorted(set(y.tolist()))
    reports = []
    for j, kind in enumerate(kinds):
        folds = results[j * k:(j + 1) * k]
        aucs, rocs = [], []
        for f, res in enumerate(folds):
            a, roc = fold_auc_and_roc(res["scores"], y[splits[f][1]], classes)
            aucs.append(float(a))
            rocs.append(roc)
        pooled_scores = np.vstack([r["scores"] for r in folds])
        pooled_truth = np.concatenate([y[splits[f][1]] for f in range(k)])
        imps = [r["importance"] for r in folds if r["importance"] is not None]
        ranking = importance_ranking(np.mean(imps, axis=0), names) if imps else None
        reports.append(ModelReport(
            task=task.name,
            approach="A",
            learner=kind,
            classes=classes,
            fold_accuracy=[r["accuracy"] for r in folds],
            fold_auc=aucs,
            fold_hyperparameters=[r["hyperparameters"] for r in folds],
            fold_roc=rocs,
            mean_roc=mean_roc(rocs),
            pooled_auc=pooled_auc(pooled_scores, pooled_truth, classes),
            feature_importance=ranking,
            extra={"n_folds_with_importance": len(imps)},
            fold_zscore=[r["zscore"] for r in folds],
        ))
    return reports
