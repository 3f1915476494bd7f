"""Thin wrapper around the CART growth kernel."""
import numpy as np

from .._kernels import build_tree, tree_apply

GINI, SQUARED_ERROR = 0, 1
_NO_PRESORT = np.zeros((0, 0), dtype=np.int64)
_NO_VALS = np.zeros((0, 0))


def grow(X, sample_idx, *, yc=None, yr=None, n_classes=1, criterion=GINI, max_depth=None,
         min_samples_split=2, min_samples_leaf=1, max_features=None, candidates=None, seed=0, presort=None):
    """Grow one tree on the rows ``sample_idx`` (duplicates allowed).

    Returns a dict of node arrays plus ``order``/``assign``: the training rows
    in leaf-grouped order and the leaf node of each of them. ``presort``
    (row order per column of ``X``) only speeds up the jitted kernel.
    """
    n = X.shape[0]
    if yc is None:
        yc = np.zeros(n, dtype=np.int64)
    if yr is None:
        yr = np.zeros(n)
    if candidates is None:
        candidates = np.arange(X.shape[1], dtype=np.int64)
    if max_features is None:
        max_features = candidates.size
    feature, threshold, left, right, gain, order, assign = build_tree(
        X, np.ascontiguousarray(yc, dtype=np.int64), np.ascontiguousarray(yr, dtype=np.float64),
        np.ascontiguousarray(sample_idx, dtype=np.int64), int(n_classes), int(criterion),
        -1 if max_depth is None else int(max_depth), int(min_samples_split), int(min_samples_leaf),
        int(max_features), np.ascontiguousarray(candidates, dtype=np.int64), np.uint64(seed),
        _NO_PRESORT if presort is None else presort,
        _NO_VALS if presort is None else np.take_along_axis(X.T, presort, axis=1),
    )
    return {"feature": feature, "threshold": threshold, "left": left, "right": right,
            "gain": gain, "order": order, "assign": assign}


def apply(tree, X):
    return tree_apply(tree["feature"], tree["threshold"], tree["left"], tree["right"],
                      np.ascontiguousarray(X, dtype=np.float64))


def gain_by_feature(tree, n_features):
    internal = tree["feature"] >= 0
    return np.bincount(tree["feature"][internal], weights=tree["gain"][internal], minlength=n_features)


def gains_per_tree(params, n_features):
    """Per-tree gain totals by feature for back-to-back ensemble storage."""
    off = params["offsets"]
    for t in range(len(off) - 1):
        f = params["feature"][off[t]:off[t + 1]]
        g = params["gain"][off[t]:off[t + 1]]
        internal = f >= 0
        yield np.bincount(f[internal], weights=g[internal], minlength=n_features)
