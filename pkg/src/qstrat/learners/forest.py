"""Random forest of Gini CART trees; scores are per-class vote fractions.

Tree ``t`` draws its bootstrap rows and split features from a splitmix64
sequence keyed by (seed, t), so the first trees of a larger forest are the
whole of a smaller one.
"""
import numpy as np

from .._kernels import ensemble_leaves, forest_fit
from ..rng import stream_u64
from . import trees


def _mtry(hp, d):
    mf = hp["max_features"]
    if mf == "sqrt":
        return max(1, int(np.sqrt(d)))
    if mf == "all":
        return d
    return min(int(mf), d)


def fit(X, yi, n_classes, hp, seed):
    d = X.shape[1]
    max_depth = -1 if hp["max_depth"] is None else int(hp["max_depth"])
    fe, th, le, ri, ga, leaf, offsets = forest_fit(
        X, np.ascontiguousarray(yi, dtype=np.int64), int(n_classes), int(hp["n_trees"]), max_depth,
        int(hp["min_samples_split"]), int(hp["min_samples_leaf"]), _mtry(hp, d),
        bool(hp["bootstrap"]), np.uint64(stream_u64(seed, "forest")),
    )
    return {"feature": fe, "threshold": th, "left": le, "right": ri, "gain": ga,
            "leaf_class": leaf, "offsets": offsets}


def n_trees(params):
    return len(params["offsets"]) - 1


def truncate(params, n):
    end = params["offsets"][n]
    out = {k: v[:end] for k, v in params.items() if k != "offsets"}
    out["offsets"] = params["offsets"][:n + 1]
    return out


def scores(params, X, n_classes):
    t = n_trees(params)
    leaves = ensemble_leaves(params["feature"], params["threshold"], params["left"],
                             params["right"], params["offsets"], t, X)
    votes = np.zeros((X.shape[0], n_classes))
    rows = np.arange(X.shape[0])
    for k in range(t):
        votes[rows, params["leaf_class"][leaves[k]]] += 1.0
    return votes / t


def importance(params, n_features):
    total = np.zeros(n_features)
    for g in trees.gains_per_tree(params, n_features):
        s = g.sum()
        if s > 0:
            total += g / s
    s = total.sum()
    return (total / s if s > 0 else total), "impurity-decrease"
