"""Gradient-boosted regression trees on the logistic loss.

Each stage fits a squared-error tree to the residuals ``t - p`` on a row
subsample and a per-tree column subsample, then sets every leaf to the
one-step Newton value ``sum(r) / sum(p (1 - p))``. Multiclass problems get
independent one-vs-rest heads. Scores are log-odds. Stage draws are keyed by
(seed, head, stage), so a shorter model is a prefix of a longer one.
"""
import numpy as np

from .._kernels import boost_fit_head, ensemble_leaves
from ..rng import stream_u64
from . import trees
from ._ovr import head_classes, margins_to_scores


def presort_columns(X):
    """Row indices sorted stably by each column, shape (d, n)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)


def _fit_head(X, t, hp, seed, head, presort):
    n, d = X.shape
    prior = np.clip(t.mean(), 1e-12, 1 - 1e-12)
    f0 = float(np.log(prior / (1.0 - prior)))
    n_rows = max(1, int(round(hp["subsample"] * n)))
    n_cols = max(1, int(round(hp["colsample"] * d)))
    fe, th, le, ri, ga, val, offsets = boost_fit_head(
        X, t, f0, int(hp["n_trees"]), int(hp["max_depth"]), int(hp["min_samples_leaf"]),
        float(hp["learning_rate"]), n_rows, n_cols, np.uint64(stream_u64(seed, "boost", head)), presort,
    )
    return {"f0": f0, "feature": fe, "threshold": th, "left": le, "right": ri, "gain": ga,
            "value": val, "offsets": offsets}


def fit(X, yi, n_classes, hp, seed):
    presort = presort_columns(X)
    heads = [_fit_head(X, (yi == c).astype(np.float64), hp, seed, c, presort) for c in head_classes(n_classes)]
    return {"heads": heads, "learning_rate": hp["learning_rate"]}


def n_trees(params):
    return len(params["heads"][0]["offsets"]) - 1


def truncate(params, n):
    heads = []
    for h in params["heads"]:
        end = h["offsets"][n]
        out = {k: (v[:end] if isinstance(v, np.ndarray) and k != "offsets" else v) for k, v in h.items()}
        out["offsets"] = h["offsets"][:n + 1]
        heads.append(out)
    return {**params, "heads": heads}


def scores(params, X, n_classes):
    lr = params["learning_rate"]
    margins = np.empty((X.shape[0], len(params["heads"])))
    for j, h in enumerate(params["heads"]):
        t = len(h["offsets"]) - 1
        leaves = ensemble_leaves(h["feature"], h["threshold"], h["left"], h["right"], h["offsets"], t, X)
        F = np.full(X.shape[0], h["f0"])
        for k in range(t):
            F += lr * h["value"][leaves[k]]
        margins[:, j] = F
    return margins_to_scores(margins, n_classes)


def importance(params, n_features):
    total = np.zeros(n_features)
    for h in params["heads"]:
        for g in trees.gains_per_tree(h, n_features):
            total += g
    s = total.sum()
    return (total / s if s > 0 else total), "gain"
