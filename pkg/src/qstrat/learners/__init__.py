"""Five classifiers behind one train / predict / score interface.

``train`` takes a :class:`LearnerSpec` and a 2-D array (or FeatureMatrix)
with string labels; classes are kept in sorted order, which is also the
tie-break order of :func:`predict`. Binary problems use a single head whose
margin ``f`` gives scores ``[-f, f]``; with more classes every class gets its
own one-vs-rest head (SVM, LogReg, GradientBoost).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, DegenerateLabelsError, ParameterError, SchemaError
from ..metrics import ScoreSet
from . import boosting, forest, knn, logreg, svm

MODEL_FORMAT = "qstrat.model"
MODEL_VERSION = 1

KINDS = ("SVM", "RandomForest", "LogReg", "GradientBoost", "KNN")

_IMPL = {
    "SVM": svm,
    "RandomForest": forest,
    "LogReg": logreg,
    "GradientBoost": boosting,
    "KNN": knn,
}


def _pos_float(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0


def _unit(v):
    return _pos_float(v) and v <= 1


def _int_at_least(k):
    return lambda v: isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v >= k


def _one_of(*opts):
    return lambda v: v in opts


# name -> (default, validator); order is the grid enumeration order
SCHEMAS = {
    "SVM": {
        "C": (1.0, _pos_float),
        "kernel": ("rbf", _one_of("linear", "rbf", "poly")),
        "gamma": ("1/d", lambda v: v == "1/d" or _pos_float(v)),
        "degree": (3, _int_at_least(1)),
        "coef0": (0.0, lambda v: isinstance(v, (int, float)) and not isinstance(v, bool)),
    },
    "LogReg": {
        "penalty": ("l2", _one_of("l1", "l2")),
        "C": (1.0, _pos_float),
    },
    "RandomForest": {
        "n_trees": (100, _int_at_least(1)),
        "max_depth": (None, lambda v: v is None or _int_at_least(1)(v)),
        "min_samples_split": (2, _int_at_least(2)),
        "min_samples_leaf": (1, _int_at_least(1)),
        "max_features": ("sqrt", lambda v: v in ("sqrt", "all") or _int_at_least(1)(v)),
        "bootstrap": (True, lambda v: isinstance(v, bool)),
    },
    "GradientBoost": {
        "n_trees": (100, _int_at_least(1)),
        "max_depth": (3, _int_at_least(1)),
        "learning_rate": (0.1, _unit),
        "subsample": (1.0, _unit),
        "colsample": (1.0, _unit),
        "min_samples_leaf": (1, _int_at_least(1)),
    },
    "KNN": {
        "n_neighbors": (5, _int_at_least(1)),
        "weights": ("uniform", _one_of("uniform", "distance")),
        "metric": ("euclidean", _one_of("euclidean", "manhattan")),
    },
}

# SVM hyperparameters that only matter for some kernels
SVM_KERNEL_PARAMS = {"linear": (), "rbf": ("gamma",), "poly": ("gamma", "degree", "coef0")}


def normalize_hyperparameters(kind, hp):
    """Fill defaults and validate; ``"unbounded"`` is accepted for ``max_depth``."""
    if kind not in SCHEMAS:
        raise ParameterError(f"unknown learner kind {kind!r}")
    schema = SCHEMAS[kind]
    unknown = set(hp) - set(schema)
    if unknown:
        raise ParameterError(f"{kind}: unknown hyperparameters {sorted(unknown)}")
    out = {}
    for name, (default, ok) in schema.items():
        v = hp.get(name, default)
        if name == "max_depth" and v == "unbounded":
            v = None
        if isinstance(v, float) and name in ("n_trees", "degree", "n_neighbors") and v.is_integer():
            v = int(v)
        if not ok(v):
            raise ParameterError(f"{kind}: invalid {name}={v!r}")
        out[name] = v
    return out


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hyperparameters", normalize_hyperparameters(self.kind, dict(self.hyperparameters)))
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must fit in 64 bits")
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class TrainedModel:
    spec: LearnerSpec
    classes: tuple
    n_features: int
    params: dict = field(repr=False)


@dataclass(frozen=True)
class FeatureImportance:
    weights: np.ndarray
    method: str


def _as_array(x):
    values = getattr(x, "values", x)
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise SchemaError(f"feature array must be 2-D, got shape {arr.shape}")
    return arr


def train(spec, x, y):
    """Fit ``spec`` on features ``x`` (n, d) and labels ``y``; deterministic given the seed."""
    X = _as_array(x)
    y = np.asarray(y if y is not None else getattr(x, "labels"))
    if X.shape[0] != y.size:
        raise SchemaError(f"{X.shape[0]} rows but {y.size} labels")
    if X.shape[0] < 2:
        raise ParameterError("need at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise DataError("features contain NaN or Inf")
    classes, yi = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise DegenerateLabelsError(f"only one class present: {classes.tolist()}")
    params = _IMPL[spec.kind].fit(X, yi, classes.size, spec.hyperparameters, spec.seed)
    return TrainedModel(spec, tuple(classes.tolist()), X.shape[1], params)


def _check_width(model, X):
    if X.shape[1] != model.n_features:
        raise SchemaError(f"model expects {model.n_features} features, got {X.shape[1]}")


def decision_scores(model, x):
    """Per-class scores as a :class:`ScoreSet` (columns follow ``model.classes``)."""
    X = _as_array(x)
    _check_width(model, X)
    s = _IMPL[model.spec.kind].scores(model.params, X, len(model.classes))
    return ScoreSet(s, model.classes)


def predict(model, x):
    s = decision_scores(model, x).scores
    return np.asarray(model.classes, dtype=object)[np.argmax(s, axis=1)]


ENSEMBLE_KINDS = ("RandomForest", "GradientBoost")


def truncate(model, n_trees):
    """The first ``n_trees`` members of a tree ensemble.

    Trees draw from per-tree (or per-stage) streams, so the result equals a
    model trained with ``n_trees`` directly.
    """
    if model.spec.kind not in ENSEMBLE_KINDS:
        raise ParameterError(f"{model.spec.kind} is not a tree ensemble")
    have = model.spec.hyperparameters["n_trees"]
    if not 1 <= n_trees <= have:
        raise ParameterError(f"cannot truncate {have} trees to {n_trees}")
    params = _IMPL[model.spec.kind].truncate(model.params, n_trees)
    spec = LearnerSpec(model.spec.kind, {**model.spec.hyperparameters, "n_trees": n_trees}, model.spec.seed)
    return TrainedModel(spec, model.classes, model.n_features, params)


def feature_importance(model):
    """Non-negative per-feature weights, or ``None`` where the learner has none."""
    res = _IMPL[model.spec.kind].importance(model.params, model.n_features)
    if res is None:
        return None
    weights, method = res
    return FeatureImportance(np.asarray(weights, dtype=np.float64), method)


# --------------------------------------------------------------------------
# JSON


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_to_json(model):
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.spec.kind,
        "hyperparameters": model.spec.hyperparameters,
        "seed": model.spec.seed,
        "classes": list(model.classes),
        "n_features": model.n_features,
        "params": _encode(model.params),
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text):
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise SchemaError("not a qstrat model document")
    if doc.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {doc.get('version')}")
    spec = LearnerSpec(doc["kind"], doc["hyperparameters"], doc["seed"])
    return TrainedModel(spec, tuple(doc["classes"]), int(doc["n_features"]), _decode(doc["params"]))
