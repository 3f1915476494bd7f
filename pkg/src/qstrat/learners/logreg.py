"""Penalised logistic regression, one-vs-rest for >2 classes.

Per head the objective is ``penalty(w) + C * sum(log(1 + exp(-y (x.w + b))))``
with ``penalty = 0.5 ||w||^2`` (L2) or ``||w||_1`` (L1); the intercept is not
penalised. L2 is solved by damped Newton, L1 by FISTA on the smooth part
with soft-thresholding. Both stop at gradient norm 1e-6 (the proximal
gradient mapping for L1) or 10 000 iterations.
"""
import numpy as np

from .._kernels import fista_l1_logistic
from ._ovr import head_classes, margins_to_scores

GRAD_TOL = 1e-6
MAX_ITER = 10_000


def _loss_grad_l2(X1, y, beta, C):
    z = X1 @ beta
    m = y * z
    loss = C * np.sum(np.logaddexp(0.0, -m))
    p = 0.5 * (1.0 + np.tanh(0.5 * z))  # sigmoid(z)
    t = (y > 0).astype(np.float64)
    w = beta.copy()
    w[-1] = 0.0
    grad = C * (X1.T @ (p - t)) + w
    return loss + 0.5 * (w @ w), grad, p


def penalized_loss(X, y, w, b, C, penalty="l2"):
    m = y * (X @ w + b)
    reg = 0.5 * (w @ w) if penalty == "l2" else np.abs(w).sum()
    return C * np.sum(np.logaddexp(0.0, -m)) + reg


def newton_l2(X, y, C, tol=GRAD_TOL, max_iter=MAX_ITER):
    n, d = X.shape
    X1 = np.column_stack([X, np.ones(n)])
    beta = np.zeros(d + 1)
    reg = np.ones(d + 1)
    reg[-1] = 0.0
    loss, grad, p = _loss_grad_l2(X1, y, beta, C)
    it = 0
    while np.linalg.norm(grad) > tol and it < max_iter:
        H = C * (X1.T * (p * (1.0 - p))) @ X1 + np.diag(reg)
        H[-1, -1] += 1e-12
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = beta - t * step
            c_loss, c_grad, c_p = _loss_grad_l2(X1, y, cand, C)
            if c_loss <= loss - 1e-4 * t * (grad @ step) or t < 1e-10:
                break
            t *= 0.5
        beta, loss, grad, p = cand, c_loss, c_grad, c_p
        it += 1
    return beta[:-1], float(beta[-1]), it, float(np.linalg.norm(grad))


def l1_fista(X, y, C, tol=GRAD_TOL, max_iter=MAX_ITER):
    X1 = np.column_stack([X, np.ones(X.shape[0])])
    lipschitz = C * np.linalg.norm(X1, 2) ** 2 / 4.0
    w, b, it, gnorm = fista_l1_logistic(np.ascontiguousarray(X), np.ascontiguousarray(y), float(C),
                                        float(max(lipschitz, 1e-12)), float(tol), int(max_iter))
    return np.asarray(w), float(b), int(it), float(gnorm)


def fit(X, yi, n_classes, hp, seed):
    heads = []
    solver = newton_l2 if hp["penalty"] == "l2" else l1_fista
    for c in head_classes(n_classes):
        yb = np.where(yi == c, 1.0, -1.0)
        w, b, it, gnorm = solver(X, yb, hp["C"])
        heads.append({"coef": w, "intercept": b, "iterations": it, "grad_norm": gnorm})
    return {"heads": heads}


def scores(params, X, n_classes):
    margins = np.column_stack([X @ h["coef"] + h["intercept"] for h in params["heads"]])
    return margins_to_scores(margins, n_classes)


def importance(params, n_features):
    return np.mean([np.abs(h["coef"]) for h in params["heads"]], axis=0), "abs-coefficient"
