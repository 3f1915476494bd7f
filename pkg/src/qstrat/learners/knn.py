"""k-nearest neighbours; scores are the neighbour weight share of each class."""
import numpy as np


def fit(X, yi, n_classes, hp, seed):
    return {"X": X.copy(), "y": yi.copy(), "n_neighbors": hp["n_neighbors"],
            "weights": hp["weights"], "metric": hp["metric"]}


def distances(A, B, metric):
    if metric == "manhattan":
        return np.abs(A[:, None, :] - B[None, :, :]).sum(-1)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.sqrt(np.maximum(sq, 0.0))


def scores(params, X, n_classes):
    D = distances(X, params["X"], params["metric"])
    k = min(params["n_neighbors"], D.shape[1])
    nn = np.argsort(D, axis=1, kind="mergesort")[:, :k]
    d = np.take_along_axis(D, nn, axis=1)
    if params["weights"] == "distance":
        exact = d <= 0
        w = np.where(exact.any(axis=1, keepdims=True), exact.astype(np.float64), 1.0 / np.where(exact, 1.0, d))
    else:
        w = np.ones_like(d)
    out = np.zeros((X.shape[0], n_classes))
    rows = np.repeat(np.arange(X.shape[0]), k)
    np.add.at(out, (rows, params["y"][nn].ravel()), w.ravel())
    return out / out.sum(axis=1, keepdims=True)


def importance(params, n_features):
    return None
