"""Pure-numpy kernels, used when numba is absent or ``QSTRAT_NO_NUMBA=1``.

Each function follows the jitted twin step for step (same selection and
tie rules, same summation order) so both paths give the same models.
"""
import math

import numpy as np

from ..rng import MASK64, splitmix64

TAU = 1e-12


def _last_argmax(v, mask):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return -1, -np.inf
    vals = v[idx]
    top = vals.max()
    return int(idx[np.flatnonzero(vals == top)[-1]]), float(top)


def smo_solve(K, y, C, eps, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    pos = y > 0
    it = 0
    gap = np.inf
    while it < max_iter:
        up = np.where(pos, alpha < C, alpha > 0)
        i, gmax = _last_argmax(-y * G, up)
        j = -1
        gmax2 = -np.inf
        if i >= 0:
            low = np.where(pos, alpha > 0, alpha < C)
            if low.any():
                gmax2 = float((y * G)[low].max())
            gd = gmax + y * G
            qc = diag[i] + diag - 2.0 * K[i]
            qc[qc <= 0] = TAU
            od = -(gd * gd) / qc
            ok = low & (gd > 0)
            if ok.any():
                cand = np.flatnonzero(ok)
                vals = od[cand]
                j = int(cand[np.flatnonzero(vals == vals.min())[-1]])
        gap = gmax + gmax2
        if gap < eps or j == -1:
            break
        it += 1

        qii, qjj = K[i, i], K[j, j]
        qij = y[i] * y[j] * K[i, j]
        ai_old, aj_old = alpha[i], alpha[j]
        ai, aj = ai_old, aj_old
        if y[i] != y[j]:
            qc_ = qii + qjj + 2.0 * qij
            if qc_ <= 0:
                qc_ = TAU
            delta = (-G[i] - G[j]) / qc_
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            qc_ = qii + qjj - 2.0 * qij
            if qc_ <= 0:
                qc_ = TAU
            delta = (G[i] - G[j]) / qc_
            s = ai + aj
            ai -= delta
            aj += delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            elif aj < 0:
                aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            elif ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        dai, daj = ai - ai_old, aj - aj_old
        G += (y[i] * y * K[i]) * dai + (y[j] * y * K[j]) * daj

    yg = y * G
    at_upper = alpha >= C
    at_lower = ~at_upper & (alpha <= 0)
    free = ~at_upper & ~at_lower
    if free.any():
        rho = float(np.cumsum(yg[free])[-1] / free.sum())
    else:
        ub_mask = (at_upper & ~pos) | (at_lower & pos)
        lb_mask = (at_upper & pos) | (at_lower & ~pos)
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0
    return alpha, rho, it, gap


# --------------------------------------------------------------------------
# CART


def _choose_features(candidates, max_features, seed, node):
    perm = np.array(candidates, dtype=np.int64)
    m = perm.size
    if max_features >= m:
        return perm
    r = splitmix64(int(seed) ^ splitmix64(node))
    for k in range(max_features):
        r = splitmix64(r)
        pick = k + r % (m - k)
        perm[k], perm[pick] = perm[pick], perm[k]
    return perm[:max_features]


def build_tree(X, yc, yr, sample_idx, n_classes, criterion, max_depth,
               min_samples_split, min_samples_leaf, max_features, candidates, seed, presort=None,
               presort_vals=None):
    # ``presort``/``presort_vals`` only spare the jitted twin its per-node sorting; the order
    # it encodes is the stable per-node sort done here
    n = sample_idx.shape[0]
    order = sample_idx.astype(np.int64).copy()
    feature, threshold, left, right, gain = [-1], [0.0], [-1], [-1], [0.0]
    nstart, nend = [0], [n]
    stack = [(0, 0)]
    onehot = np.eye(n_classes)
    seed = int(seed) & MASK64
    while stack:
        node, depth = stack.pop()
        start, end = nstart[node], nend[node]
        m = end - start
        idx = order[start:end]
        if criterion == 0:
            counts = np.bincount(yc[idx], minlength=n_classes).astype(np.float64)
            sq = 0.0
            for c in range(n_classes):
                sq += counts[c] * counts[c]
            imp = m - sq / m
        else:
            t = yr[idx]
            # node totals in position order, shared by every candidate feature
            s1 = float(np.cumsum(t)[-1])
            s2 = float(np.cumsum(t * t)[-1])
            imp = s2 - s1 * s1 / m
        if (max_depth >= 0 and depth >= max_depth) or m < min_samples_split \
                or m < 2 * min_samples_leaf or imp <= 1e-12:
            continue

        best_gain, best_f, best_thr = 1e-12, -1, 0.0
        nl = np.arange(1, m, dtype=np.float64)
        nr = m - nl
        inv_nl, inv_nr = 1.0 / nl, 1.0 / nr
        size_ok = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        for f in _choose_features(candidates, max_features, seed, node):
            v = X[idx, f]
            srt = np.argsort(v, kind="mergesort")
            vs = v[srt]
            if criterion == 0:
                L = np.cumsum(onehot[yc[idx[srt]]], axis=0)[:-1]
                R = counts - L
                sql = np.zeros(m - 1)
                sqr = np.zeros(m - 1)
                for c in range(n_classes):
                    sql = sql + L[:, c] * L[:, c]
                    sqr = sqr + R[:, c] * R[:, c]
                child = (nl - sql / nl) + (nr - sqr / nr)
            else:
                t = yr[idx[srt]]
                cs, cs2 = np.cumsum(t), np.cumsum(t * t)
                ls, ls2 = cs[:-1], cs2[:-1]
                rs, rs2 = s1 - ls, s2 - ls2
                child = (ls2 - ls * ls * inv_nl) + (rs2 - rs * rs * inv_nr)
            g = imp - child
            ok = size_ok & (vs[:-1] != vs[1:])
            if not ok.any():
                continue
            g = np.where(ok, g, -np.inf)
            p = int(np.argmax(g))
            if g[p] > best_gain:
                best_gain, best_f = float(g[p]), int(f)
                thr = (vs[p] + vs[p + 1]) * 0.5
                best_thr = float(vs[p]) if thr >= vs[p + 1] else float(thr)
        if best_f < 0:
            continue

        go_left = X[idx, best_f] <= best_thr
        order[start:end] = np.concatenate([idx[go_left], idx[~go_left]])
        n_left = int(go_left.sum())
        lc, rc = len(feature), len(feature) + 1
        for _ in range(2):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            gain.append(0.0)
        nstart += [start, start + n_left]
        nend += [start + n_left, end]
        feature[node], threshold[node] = best_f, best_thr
        left[node], right[node], gain[node] = lc, rc, best_gain
        stack.append((rc, depth + 1))
        stack.append((lc, depth + 1))

    feature = np.array(feature, dtype=np.int64)
    assign = np.empty(n, dtype=np.int64)
    for node in np.flatnonzero(feature < 0):
        assign[nstart[node]:nend[node]] = node
    return (feature, np.array(threshold), np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64), np.array(gain), order, assign)


def tree_apply(feature, threshold, left, right, X):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        a = rows[active]
        f = feature[node[a]]
        go_left = X[a, f] <= threshold[node[a]]
        node[a] = np.where(go_left, left[node[a]], right[node[a]])
        active = feature[node] >= 0
    return node


# --------------------------------------------------------------------------
# L1 logistic regression


def _logistic_grad(X, y, w, b, C):
    z = X @ w + b
    m = y * z
    e = np.exp(-np.abs(m))
    r = np.where(m > 0, -y * e / (1.0 + e), -y / (1.0 + e))
    return C * (X.T @ r), C * np.sum(r)


def _soft(u, step):
    return np.sign(u) * np.maximum(np.abs(u) - step, 0.0)


def prox_grad_norm(X, y, w, b, C, step):
    gw, gb = _logistic_grad(X, y, w, b, C)
    g = (w - _soft(w - step * gw, step)) / step
    return float(np.sqrt(gb * gb + g @ g))


def fista_l1_logistic(X, y, C, lipschitz, tol, max_iter):
    d = X.shape[1]
    step = 1.0 / lipschitz
    w, b = np.zeros(d), 0.0
    vw, vb = w.copy(), b
    t = 1.0
    it = 0
    while it < max_iter:
        gw, gb = _logistic_grad(X, y, vw, vb, C)
        wn = _soft(vw - step * gw, step)
        bn = vb - step * gb
        if (bn - b) * (vb - bn) + (wn - w) @ (vw - wn) > 0:
            t = 1.0
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / tn
        vw = wn + mom * (wn - w)
        vb = bn + mom * (bn - b)
        w, b, t = wn, bn, tn
        it += 1
        if it % 10 == 0 or it == max_iter:
            if prox_grad_norm(X, y, w, b, C, step) <= tol:
                break
    return w, b, it, prox_grad_norm(X, y, w, b, C, step)


# --------------------------------------------------------------------------
# tree ensembles (same layout and draws as the jitted twin)


def _partial_shuffle(idx, k, state):
    n = idx.shape[0]
    for i in range(k):
        state = splitmix64(state)
        j = i + state % (n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return state


def _sigmoid_libm(F):
    # math.tanh is the C library tanh, which is what the jitted code calls
    return np.array([0.5 * (1.0 + math.tanh(0.5 * v)) for v in F])


def boost_fit_head(X, t, f0, n_trees, max_depth, min_samples_leaf, learning_rate,
                   n_rows, n_cols, seed, presort):
    n, d = X.shape
    blocks, offsets = [], [0]
    F = np.full(n, float(f0))
    yc = np.zeros(n, dtype=np.int64)
    seed = int(seed) & MASK64
    for m in range(n_trees):
        state = splitmix64(seed ^ splitmix64(m))
        ridx, cidx = np.arange(n), np.arange(d)
        if n_rows < n:
            state = _partial_shuffle(ridx, n_rows, state)
        rows = np.sort(ridx[:n_rows])
        if n_cols < d:
            state = _partial_shuffle(cidx, n_cols, state)
        cols = np.sort(cidx[:n_cols])
        p = _sigmoid_libm(F)
        r = t - p
        fe, th, le, ri, ga, order, assign = build_tree(
            X, yc, r, rows, 1, 1, max_depth, 2, min_samples_leaf, n_cols, cols, splitmix64(state))
        pr = p[order]
        num = np.bincount(assign, weights=r[order], minlength=fe.size)
        den = np.bincount(assign, weights=pr * (1.0 - pr), minlength=fe.size)
        val = np.where(den > 1e-12, num / np.where(den > 1e-12, den, 1.0), 0.0)
        blocks.append((fe, th, le, ri, ga, val))
        offsets.append(offsets[-1] + fe.size)
        F = F + learning_rate * val[tree_apply(fe, th, le, ri, X)]
    cat = [np.concatenate([b[i] for b in blocks]) for i in range(6)]
    return (*cat, np.array(offsets, dtype=np.int64))


def forest_fit(X, yi, n_classes, n_trees, max_depth, min_samples_split, min_samples_leaf,
               max_features, bootstrap, seed):
    n, d = X.shape
    blocks, offsets = [], [0]
    yr = np.zeros(n)
    cand = np.arange(d)
    seed = int(seed) & MASK64
    for t in range(n_trees):
        state = splitmix64(seed ^ splitmix64(t))
        rows = np.arange(n)
        if bootstrap:
            for i in range(n):
                state = splitmix64(state)
                rows[i] = state % n
        fe, th, le, ri, ga, order, assign = build_tree(
            X, yi, yr, rows, n_classes, 0, max_depth, min_samples_split, min_samples_leaf,
            max_features, cand, splitmix64(state))
        counts = np.zeros((fe.size, n_classes))
        np.add.at(counts, (assign, yi[order]), 1.0)
        blocks.append((fe, th, le, ri, ga, np.argmax(counts, axis=1)))
        offsets.append(offsets[-1] + fe.size)
    cat = [np.concatenate([b[i] for b in blocks]) for i in range(6)]
    return (*cat, np.array(offsets, dtype=np.int64))


def ensemble_leaves(feature, threshold, left, right, offsets, n_use, X):
    out = np.empty((n_use, X.shape[0]), dtype=np.int64)
    for t in range(n_use):
        o, e = offsets[t], offsets[t + 1]
        out[t] = o + tree_apply(feature[o:e], threshold[o:e], left[o:e], right[o:e], X)
    return out
