"""Soft-margin SVM trained by SMO on the dual, one-vs-rest for >2 classes.

Scores are raw margins ``sum(alpha_i y_i K(x_i, x)) - rho``; no probability
calibration.
"""
import numpy as np

from .._kernels import smo_solve
from ._ovr import head_classes, margins_to_scores

KKT_TOL = 1e-3


def kernel_matrix(A, B, kernel, gamma, degree, coef0):
    G = A @ B.T
    if kernel == "linear":
        return G
    if kernel == "poly":
        return (gamma * G + coef0) ** degree
    if kernel == "rbf":
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * G
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


def _resolve_gamma(hp, n_features):
    g = hp["gamma"]
    return 1.0 / n_features if g == "1/d" else float(g)


def solve_binary(K, yb, C, tol=KKT_TOL, max_iter=None):
    """Dual solution for one +/-1 target vector; returns (alpha, rho, iterations, gap)."""
    if max_iter is None:
        max_iter = max(100_000, 100 * yb.size)
    alpha, rho, it, gap = smo_solve(np.ascontiguousarray(K), np.ascontiguousarray(yb, dtype=np.float64),
                                    float(C), float(tol), int(max_iter))
    return alpha, float(rho), int(it), float(gap)


def fit(X, yi, n_classes, hp, seed):
    gamma = _resolve_gamma(hp, X.shape[1])
    kernel = hp["kernel"]
    K = kernel_matrix(X, X, kernel, gamma, hp["degree"], hp["coef0"])
    heads = []
    for c in head_classes(n_classes):
        yb = np.where(yi == c, 1.0, -1.0)
        alpha, rho, it, gap = solve_binary(K, yb, hp["C"])
        sv = alpha > 0
        head = {
            "alpha": alpha,
            "rho": rho,
            "iterations": it,
            "gap": gap,
            "sv_index": np.flatnonzero(sv),
            "sv_coef": (alpha * yb)[sv],
        }
        if kernel == "linear":
            head["w"] = X[sv].T @ head["sv_coef"]
        heads.append(head)
    return {"kernel": kernel, "gamma": gamma, "degree": hp["degree"], "coef0": hp["coef0"],
            "support": X.copy(), "heads": heads}  # own buffer: scoring never aliases caller data


def scores(params, X, n_classes):
    margins = np.empty((X.shape[0], len(params["heads"])))
    if params["kernel"] == "linear":
        for h, head in enumerate(params["heads"]):
            margins[:, h] = X @ head["w"] - head["rho"]
    else:
        S = params["support"]
        Kx = kernel_matrix(X, S, params["kernel"], params["gamma"], params["degree"], params["coef0"])
        for h, head in enumerate(params["heads"]):
            margins[:, h] = Kx[:, head["sv_index"]] @ head["sv_coef"] - head["rho"]
    return margins_to_scores(margins, n_classes)


def importance(params, n_features):
    if params["kernel"] != "linear":
        return None
    w = np.mean([np.abs(h["w"]) for h in params["heads"]], axis=0)
    return w, "abs-coefficient"
