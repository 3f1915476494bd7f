"""Jitted inner loops. Signatures and results mirror :mod:`._numpy`."""
import numpy as np
from numba import njit

TAU = 1e-12
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def splitmix64(x):
    x = x + GOLDEN
    x = (x ^ (x >> np.uint64(30))) * M1
    x = (x ^ (x >> np.uint64(27))) * M2
    return x ^ (x >> np.uint64(31))


# --------------------------------------------------------------------------
# SMO


@njit(cache=True, nogil=True)
def smo_solve(K, y, C, eps, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    while it < max_iter:
        # working set selection, second-order information
        gmax = -np.inf
        gmax2 = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        j = -1
        obj_min = np.inf
        if i >= 0:
            for t in range(n):
                if y[t] > 0:
                    if alpha[t] > 0:
                        gd = gmax + G[t]
                        if G[t] >= gmax2:
                            gmax2 = G[t]
                        if gd > 0:
                            qc = K[i, i] + K[t, t] - 2.0 * K[i, t]
                            if qc <= 0:
                                qc = TAU
                            od = -(gd * gd) / qc
                            if od <= obj_min:
                                j = t
                                obj_min = od
                else:
                    if alpha[t] < C:
                        gd = gmax - G[t]
                        if -G[t] >= gmax2:
                            gmax2 = -G[t]
                        if gd > 0:
                            qc = K[i, i] + K[t, t] - 2.0 * K[i, t]
                            if qc <= 0:
                                qc = TAU
                            od = -(gd * gd) / qc
                            if od <= obj_min:
                                j = t
                                obj_min = od
        gap = gmax + gmax2
        if gap < eps or j == -1:
            break
        it += 1

        qii = K[i, i]
        qjj = K[j, j]
        qij = y[i] * y[j] * K[i, j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            qc = qii + qjj + 2.0 * qij
            if qc <= 0:
                qc = TAU
            delta = (-G[i] - G[j]) / qc
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            qc = qii + qjj - 2.0 * qij
            if qc <= 0:
                qc = TAU
            delta = (G[i] - G[j]) / qc
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for k in range(n):
            G[k] += (y[i] * y[k] * K[i, k]) * dai + (y[j] * y[k] * K[j, k]) * daj

    # offset
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it, gap


# --------------------------------------------------------------------------
# CART


@njit(cache=True, nogil=True, inline="always")
def _stable_argsort(vals, m, out):
    # insertion sort for small nodes; stable, so it agrees with mergesort
    if m > 64:
        out[:m] = np.argsort(vals[:m], kind="mergesort")
        return
    for p in range(m):
        out[p] = p
    for p in range(1, m):
        cur = out[p]
        v = vals[cur]
        q = p - 1
        while q >= 0 and vals[out[q]] > v:
            out[q + 1] = out[q]
            q -= 1
        out[q + 1] = cur


@njit(cache=True, nogil=True, inline="always")
def _best_cut(S, row, off, sc, sr, m, imp, counts, lcounts, n_classes, criterion,
              min_samples_leaf, floor, inv, ts, ts2):
    """First cut of the sorted values ``S[row, off:off + m]`` whose gain beats ``floor``, or -1.

    ``ts``/``ts2`` are the node's target sum and sum of squares (regression only).
    """
    best_p = -1
    best_g = floor
    if criterion == 0:
        for c in range(n_classes):
            lcounts[c] = 0.0
        for p in range(m - 1):
            lcounts[sc[p]] += 1.0
            if S[row, off + p] == S[row, off + p + 1]:
                continue
            nl = p + 1
            nr = m - nl
            if nl < min_samples_leaf or nr < min_samples_leaf:
                continue
            sql = 0.0
            sqr = 0.0
            for c in range(n_classes):
                sql += lcounts[c] * lcounts[c]
                rc = counts[c] - lcounts[c]
                sqr += rc * rc
            g = imp - ((nl - sql / nl) + (nr - sqr / nr))
            if g > best_g:
                best_g = g
                best_p = p
        return best_p, best_g
    # squared error; ``inv[k]`` is 1 / (k + 1)
    ls = 0.0
    ls2 = 0.0
    lo = min_samples_leaf - 1
    hi = m - min_samples_leaf
    for p in range(lo):
        ls += sr[p]
        ls2 += sr[p] * sr[p]
    for p in range(lo, hi):
        ls += sr[p]
        ls2 += sr[p] * sr[p]
        rs = ts - ls
        rs2 = ts2 - ls2
        g = imp - ((ls2 - ls * ls * inv[p]) + (rs2 - rs * rs * inv[m - p - 2]))
        if g > best_g and S[row, off + p] != S[row, off + p + 1]:
            best_g = g
            best_p = p
    return best_p, best_g


@njit(cache=True, nogil=True)
def build_tree(X, yc, yr, sample_idx, n_classes, criterion, max_depth,
               min_samples_split, min_samples_leaf, max_features, candidates, seed, presort,
               presort_vals):
    n = sample_idx.shape[0]
    cap = 2 * n + 1
    feature = -np.ones(cap, dtype=np.int64)
    threshold = np.zeros(cap)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    gain = np.zeros(cap)
    nstart = np.zeros(cap, dtype=np.int64)
    nend = np.zeros(cap, dtype=np.int64)
    yc_pos = np.empty(n, dtype=np.int64)
    yr_pos = np.empty(n)
    for q in range(n):
        yc_pos[q] = yc[sample_idx[q]]
        yr_pos[q] = yr[sample_idx[q]]
    # node members are positions into sample_idx, kept ascending within a node
    opos = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    fbuf = np.empty(n)
    side = np.zeros(n, dtype=np.bool_)
    counts = np.zeros(n_classes)
    lcounts = np.zeros(n_classes)
    n_cand = candidates.shape[0]
    perm = np.empty(n_cand, dtype=np.int64)
    vals = np.empty(n)
    srt = np.empty(n, dtype=np.int64)
    sv = np.empty((1, n))
    sc = np.empty(n, dtype=np.int64)
    sr = np.empty(n)
    inv = np.empty(n)
    for q in range(n):
        inv[q] = 1.0 / (q + 1)

    # When every candidate is tried at every node, each candidate's values are
    # sorted once and split by stable partition instead of being re-sorted.
    # Ties stay in position order, exactly as with the per-node stable sort.
    keep_sorted = max_features >= n_cand
    SV = np.empty((n_cand if keep_sorted else 0, n))
    SP = np.empty((n_cand if keep_sorted else 0, n), dtype=np.int64)
    if keep_sorted:
        ascending = True
        for q in range(1, n):
            if sample_idx[q] < sample_idx[q - 1]:
                ascending = False
        if ascending and presort.shape[0] == X.shape[1] and presort.shape[1] == X.shape[0] \
                and presort_vals.shape[0] == X.shape[1]:
            first = np.zeros(X.shape[0], dtype=np.int64)
            mult = np.zeros(X.shape[0], dtype=np.int64)
            for q in range(n - 1, -1, -1):
                first[sample_idx[q]] = q
                mult[sample_idx[q]] += 1
            for k in range(n_cand):
                f = candidates[k]
                w = 0
                for i in range(X.shape[0]):
                    r = presort[f, i]
                    for c in range(mult[r]):
                        SV[k, w] = presort_vals[f, i]
                        SP[k, w] = first[r] + c
                        w += 1
        else:
            for k in range(n_cand):
                f = candidates[k]
                for q in range(n):
                    vals[q] = X[sample_idx[q], f]
                _stable_argsort(vals, n, srt)
                for q in range(n):
                    SV[k, q] = vals[srt[q]]
                    SP[k, q] = srt[q]

    st_node = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_depth[0] = 0
    sp = 1
    nstart[0] = 0
    nend[0] = n
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        depth = st_depth[sp]
        start = nstart[node]
        end = nend[node]
        m = end - start
        s1 = 0.0
        s2 = 0.0
        if criterion == 0:
            for c in range(n_classes):
                counts[c] = 0.0
            for p in range(start, end):
                counts[yc_pos[opos[p]]] += 1.0
            sq = 0.0
            for c in range(n_classes):
                sq += counts[c] * counts[c]
            imp = m - sq / m
        else:
            for p in range(start, end):
                v = yr_pos[opos[p]]
                s1 += v
                s2 += v * v
            imp = s2 - s1 * s1 / m
        if (max_depth >= 0 and depth >= max_depth) or m < min_samples_split \
                or m < 2 * min_samples_leaf or imp <= 1e-12:
            continue

        for k in range(n_cand):
            perm[k] = k
        n_try = max_features
        if n_try >= n_cand:
            n_try = n_cand
        else:
            r = splitmix64(seed ^ splitmix64(np.uint64(node)))
            for k in range(n_try):
                r = splitmix64(r)
                pick = k + np.int64(r % np.uint64(n_cand - k))
                tmp = perm[k]
                perm[k] = perm[pick]
                perm[pick] = tmp

        best_gain = 1e-12
        best_f = -1
        best_thr = 0.0
        for kk in range(n_try):
            k = perm[kk]
            f = candidates[k]
            if keep_sorted:
                if criterion == 0:
                    for p in range(m):
                        sc[p] = yc_pos[SP[k, start + p]]
                else:
                    for p in range(m):
                        sr[p] = yr_pos[SP[k, start + p]]
                S = SV
                row = k
                off = start
            else:
                for p in range(m):
                    vals[p] = X[sample_idx[opos[start + p]], f]
                _stable_argsort(vals, m, srt)
                for p in range(m):
                    q = opos[start + srt[p]]
                    sv[0, p] = vals[srt[p]]
                    sc[p] = yc_pos[q]
                    sr[p] = yr_pos[q]
                S = sv
                row = 0
                off = 0
            p, g = _best_cut(S, row, off, sc, sr, m, imp, counts, lcounts, n_classes, criterion,
                             min_samples_leaf, best_gain, inv, s1, s2)
            if p >= 0:
                best_gain = g
                best_f = f
                lo_v = S[row, off + p]
                hi_v = S[row, off + p + 1]
                thr = (lo_v + hi_v) * 0.5
                if thr >= hi_v:
                    thr = lo_v
                best_thr = thr
        if best_f < 0:
            continue

        nl = 0
        for p in range(start, end):
            q = opos[p]
            go = X[sample_idx[q], best_f] <= best_thr
            side[q] = go
            if go:
                nl += 1
        w = start
        b = 0
        for p in range(start, end):
            q = opos[p]
            if side[q]:
                opos[w] = q
                w += 1
            else:
                buf[b] = q
                b += 1
        for p in range(b):
            opos[w + p] = buf[p]
        # children that can never split do not need their sorted lists
        grow_on = max_depth < 0 or depth + 1 < max_depth
        if keep_sorted and grow_on and (nl >= min_samples_split or m - nl >= min_samples_split):
            for k in range(n_cand):
                w = start
                b = 0
                # branch-free: the side of a sample is unpredictable
                spk = SP[k]
                svk = SV[k]
                for p in range(start, end):
                    q = spk[p]
                    v = svk[p]
                    go = np.int64(side[q])
                    spk[w] = q
                    svk[w] = v
                    buf[b] = q
                    fbuf[b] = v
                    w += go
                    b += 1 - go
                for p in range(b):
                    spk[w + p] = buf[p]
                    svk[w + p] = fbuf[p]

        lc = n_nodes
        rc_ = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lc
        right[node] = rc_
        gain[node] = best_gain
        nstart[lc] = start
        nend[lc] = start + nl
        nstart[rc_] = start + nl
        nend[rc_] = end
        st_node[sp] = rc_
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_depth[sp] = depth + 1
        sp += 1

    order = np.empty(n, dtype=np.int64)
    for p in range(n):
        order[p] = sample_idx[opos[p]]
    assign = np.empty(n, dtype=np.int64)
    for node in range(n_nodes):
        if feature[node] < 0:
            for p in range(nstart[node], nend[node]):
                assign[p] = node
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), gain[:n_nodes].copy(), order, assign)


# Boosting grows squared-error trees on a row subset with every candidate
# column tried at every node. Here they grow level by level: each candidate's
# sorted rows are split once per level into contiguous child segments, and
# every segment is scanned with its running sums in registers. Cuts, sums and
# comparisons happen in the same order as in ``build_tree``, and the nodes are
# renumbered into its depth-first order, so the two agree bit for bit.


@njit(cache=True, nogil=True, inline="always")
def _scan_segment(SV, SP, k, st, m, yp, inv, s1, s2, imp, msl, floor):
    sv = SV[k, st:st + m]
    sp = SP[k, st:st + m]
    best_p = -1
    best_g = floor
    L = 0.0
    L2 = 0.0
    for p in range(msl - 1):
        y = yp[sp[p]]
        L += y
        L2 += y * y
    for p in range(msl - 1, m - msl):
        y = yp[sp[p]]
        L += y
        L2 += y * y
        rs = s1 - L
        rs2 = s2 - L2
        g = imp - ((L2 - L * L * inv[p]) + (rs2 - rs * rs * inv[m - p - 2]))
        if g > best_g and sv[p] != sv[p + 1]:
            best_g = g
            best_p = p + 1
    return best_p, best_g


@njit(cache=True, nogil=True)
def _reg_tree_levelwise(X, yr, rows, cols, max_depth, min_samples_split, min_samples_leaf,
                       presort, presort_vals):
    N = X.shape[0]
    n = rows.shape[0]
    K = cols.shape[0]
    msl = min_samples_leaf
    pos_of = -np.ones(N, dtype=np.int64)
    for q in range(n):
        pos_of[rows[q]] = q
    # one spare slot per row absorbs the branch-free writes of excluded rows
    SPa = np.empty((K, n + 1), dtype=np.int64)
    SVa = np.empty((K, n + 1))
    SPb = np.empty((K, n + 1), dtype=np.int64)
    SVb = np.empty((K, n + 1))
    for k in range(K):
        pf, vf, spa, sva = presort[cols[k]], presort_vals[cols[k]], SPa[k], SVa[k]
        w = 0
        for i in range(N):
            q = pos_of[pf[i]]
            spa[w] = q
            sva[w] = vf[i]
            w += np.int64(q >= 0)
    yp = np.empty(n)
    inv = np.empty(n)
    for q in range(n):
        yp[q] = yr[rows[q]]
        inv[q] = 1.0 / (q + 1)

    cap = 2 * n + 1
    tfeat = -np.ones(cap, dtype=np.int64)
    tthr = np.zeros(cap)
    tgain = np.zeros(cap)
    tleft = -np.ones(cap, dtype=np.int64)
    tright = -np.ones(cap, dtype=np.int64)
    cnt = np.zeros(cap, dtype=np.int64)
    nlc = np.zeros(cap, dtype=np.int64)
    seg = np.zeros(cap, dtype=np.int64)
    s1 = np.zeros(cap)
    s2 = np.zeros(cap)
    side = np.zeros(n, dtype=np.bool_)
    node_of = np.zeros(n, dtype=np.int64)
    lo = 0
    hi = 1
    n_tmp = 1
    depth = 0
    while True:
        for q in range(n):
            nd = node_of[q]
            if nd >= lo:
                s1[nd] += yp[q]
                s2[nd] += yp[q] * yp[q]
                cnt[nd] += 1
        new_lo = n_tmp
        for nd in range(lo, hi):
            m = cnt[nd]
            imp = s2[nd] - s1[nd] * s1[nd] / m
            if (max_depth >= 0 and depth >= max_depth) or m < min_samples_split \
                    or m < 2 * msl or imp <= 1e-12:
                continue
            best_g = 1e-12
            best_k = -1
            best_p = -1
            for k in range(K):
                p, g = _scan_segment(SVa, SPa, k, seg[nd], m, yp, inv, s1[nd], s2[nd], imp, msl,
                                     best_g)
                if p >= 0:
                    best_g = g
                    best_k = k
                    best_p = p
            if best_k < 0:
                continue
            lo_v = SVa[best_k, seg[nd] + best_p - 1]
            hi_v = SVa[best_k, seg[nd] + best_p]
            thr = (lo_v + hi_v) * 0.5
            if thr >= hi_v:
                thr = lo_v
            tfeat[nd] = cols[best_k]
            tthr[nd] = thr
            tgain[nd] = best_g
            tleft[nd] = n_tmp
            tright[nd] = n_tmp + 1
            n_tmp += 2
        if n_tmp == new_lo:
            break
        for q in range(n):
            nd = node_of[q]
            if nd >= lo and tfeat[nd] >= 0:
                go = X[rows[q], tfeat[nd]] <= tthr[nd]
                side[q] = go
                if go:
                    node_of[q] = tleft[nd]
                    nlc[nd] += 1
                else:
                    node_of[q] = tright[nd]
        w = 0
        for nd in range(lo, hi):
            if tfeat[nd] >= 0:
                seg[tleft[nd]] = w
                seg[tright[nd]] = w + nlc[nd]
                w += cnt[nd]
        if max_depth < 0 or depth + 1 < max_depth:
            for k in range(K):
                spa, sva, spb, svb = SPa[k], SVa[k], SPb[k], SVb[k]
                for nd in range(lo, hi):
                    if tfeat[nd] < 0:
                        continue
                    wl = seg[tleft[nd]]
                    wr = seg[tright[nd]]
                    src = seg[nd]
                    for p in range(src, src + cnt[nd]):
                        q = spa[p]
                        go = np.int64(side[q])
                        j = wr + go * (wl - wr)
                        spb[j] = q
                        svb[j] = sva[p]
                        wl += go
                        wr += 1 - go
            SPa, SPb = SPb, SPa
            SVa, SVb = SVb, SVa
        lo = new_lo
        hi = n_tmp
        depth += 1

    # depth-first renumbering; leaves come out left to right
    fid = np.empty(n_tmp, dtype=np.int64)
    rank = -np.ones(n_tmp, dtype=np.int64)
    stack = np.empty(n_tmp, dtype=np.int64)
    fid[0] = 0
    stack[0] = 0
    sp = 1
    nn = 1
    n_leaves = 0
    while sp > 0:
        sp -= 1
        t = stack[sp]
        if tfeat[t] >= 0:
            fid[tleft[t]] = nn
            fid[tright[t]] = nn + 1
            nn += 2
            stack[sp] = tright[t]
            stack[sp + 1] = tleft[t]
            sp += 2
        else:
            rank[t] = n_leaves
            n_leaves += 1
    feature = -np.ones(n_tmp, dtype=np.int64)
    threshold = np.zeros(n_tmp)
    left = -np.ones(n_tmp, dtype=np.int64)
    right = -np.ones(n_tmp, dtype=np.int64)
    gain = np.zeros(n_tmp)
    for t in range(n_tmp):
        u = fid[t]
        if tfeat[t] >= 0:
            feature[u] = tfeat[t]
            threshold[u] = tthr[t]
            gain[u] = tgain[t]
            left[u] = fid[tleft[t]]
            right[u] = fid[tright[t]]
    size = np.zeros(n_leaves + 1, dtype=np.int64)
    for q in range(n):
        size[rank[node_of[q]] + 1] += 1
    for r in range(n_leaves):
        size[r + 1] += size[r]
    order = np.empty(n, dtype=np.int64)
    assign = np.empty(n, dtype=np.int64)
    for q in range(n):
        t = node_of[q]
        w = size[rank[t]]
        order[w] = rows[q]
        assign[w] = fid[t]
        size[rank[t]] = w + 1
    return feature, threshold, left, right, gain, order, assign


@njit(cache=True, nogil=True)
def tree_apply(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


# --------------------------------------------------------------------------
# L1 logistic regression, FISTA with gradient restart


@njit(cache=True)
def _logistic_grad(X, y, w, b, C):
    z = X @ w + b
    n = X.shape[0]
    r = np.empty(n)
    loss = 0.0
    for i in range(n):
        m = y[i] * z[i]
        if m > 0:
            e = np.exp(-m)
            loss += np.log1p(e)
            r[i] = -y[i] * e / (1.0 + e)
        else:
            e = np.exp(m)
            loss += -m + np.log1p(e)
            r[i] = -y[i] / (1.0 + e)
    gw = C * (X.T @ r)
    gb = C * np.sum(r)
    return C * loss, gw, gb


@njit(cache=True, nogil=True)
def fista_l1_logistic(X, y, C, lipschitz, tol, max_iter):
    d = X.shape[1]
    step = 1.0 / lipschitz
    w = np.zeros(d)
    b = 0.0
    vw = w.copy()
    vb = b
    t = 1.0
    gnorm = np.inf
    it = 0
    while it < max_iter:
        _, gw, gb = _logistic_grad(X, y, vw, vb, C)
        wn = np.empty(d)
        for k in range(d):
            u = vw[k] - step * gw[k]
            if u > step:
                wn[k] = u - step
            elif u < -step:
                wn[k] = u + step
            else:
                wn[k] = 0.0
        bn = vb - step * gb
        # restart momentum when it points uphill
        dot = (bn - b) * (vb - bn)
        for k in range(d):
            dot += (wn[k] - w[k]) * (vw[k] - wn[k])
        if dot > 0:
            t = 1.0
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / tn
        for k in range(d):
            vw[k] = wn[k] + mom * (wn[k] - w[k])
        vb = bn + mom * (bn - b)
        w = wn
        b = bn
        t = tn
        it += 1
        if it % 10 == 0 or it == max_iter:
            gnorm = prox_grad_norm(X, y, w, b, C, step)
            if gnorm <= tol:
                break
    gnorm = prox_grad_norm(X, y, w, b, C, step)
    return w, b, it, gnorm


@njit(cache=True)
def prox_grad_norm(X, y, w, b, C, step):
    _, gw, gb = _logistic_grad(X, y, w, b, C)
    s = gb * gb
    for k in range(w.shape[0]):
        u = w[k] - step * gw[k]
        if u > step:
            p = u - step
        elif u < -step:
            p = u + step
        else:
            p = 0.0
        g = (w[k] - p) / step
        s += g * g
    return np.sqrt(s)


# --------------------------------------------------------------------------
# tree ensembles
#
# Trees are stored back to back: tree t owns nodes offsets[t]:offsets[t+1]
# and its child indices are local to that block.


@njit(cache=True, nogil=True)
def _partial_shuffle(idx, k, state):
    n = idx.shape[0]
    for i in range(k):
        state = splitmix64(state)
        j = i + np.int64(state % np.uint64(n - i))
        tmp = idx[i]
        idx[i] = idx[j]
        idx[j] = tmp
    return state


@njit(cache=True, nogil=True)
def boost_fit_head(X, t, f0, n_trees, max_depth, min_samples_leaf, learning_rate,
                   n_rows, n_cols, seed, presort):
    n, d = X.shape
    per = 2 * n_rows + 1
    feature = np.empty(n_trees * per, dtype=np.int64)
    threshold = np.empty(n_trees * per)
    left = np.empty(n_trees * per, dtype=np.int64)
    right = np.empty(n_trees * per, dtype=np.int64)
    gain = np.empty(n_trees * per)
    value = np.empty(n_trees * per)
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    F = np.full(n, f0)
    presort_vals = np.empty((d, n))
    for j in range(d):
        for i in range(n):
            presort_vals[j, i] = X[presort[j, i], j]
    r = np.empty(n)
    p = np.empty(n)
    ridx = np.arange(n)
    cidx = np.arange(d)
    for m in range(n_trees):
        state = splitmix64(seed ^ splitmix64(np.uint64(m)))
        for i in range(n):
            ridx[i] = i
        for j in range(d):
            cidx[j] = j
        if n_rows < n:
            state = _partial_shuffle(ridx, n_rows, state)
        rows = np.sort(ridx[:n_rows])
        if n_cols < d:
            state = _partial_shuffle(cidx, n_cols, state)
        cols = np.sort(cidx[:n_cols])
        for i in range(n):
            p[i] = 0.5 * (1.0 + np.tanh(0.5 * F[i]))
            r[i] = t[i] - p[i]
        fe, th, le, ri, ga, order, assign = _reg_tree_levelwise(
            X, r, rows, cols, max_depth, 2, min_samples_leaf, presort, presort_vals)
        size = fe.shape[0]
        num = np.zeros(size)
        den = np.zeros(size)
        for q in range(order.shape[0]):
            pr = p[order[q]]
            num[assign[q]] += r[order[q]]
            den[assign[q]] += pr * (1.0 - pr)
        o = offsets[m]
        for node in range(size):
            feature[o + node] = fe[node]
            threshold[o + node] = th[node]
            left[o + node] = le[node]
            right[o + node] = ri[node]
            gain[o + node] = ga[node]
            value[o + node] = num[node] / den[node] if den[node] > 1e-12 else 0.0
        offsets[m + 1] = o + size
        for i in range(n):
            node = 0
            while fe[node] >= 0:
                if X[i, fe[node]] <= th[node]:
                    node = le[node]
                else:
                    node = ri[node]
            F[i] += learning_rate * value[o + node]
    tot = offsets[n_trees]
    return (feature[:tot].copy(), threshold[:tot].copy(), left[:tot].copy(), right[:tot].copy(),
            gain[:tot].copy(), value[:tot].copy(), offsets)


@njit(cache=True, nogil=True)
def forest_fit(X, yi, n_classes, n_trees, max_depth, min_samples_split, min_samples_leaf,
               max_features, bootstrap, seed):
    n, d = X.shape
    per = 2 * n + 1
    feature = np.empty(n_trees * per, dtype=np.int64)
    threshold = np.empty(n_trees * per)
    left = np.empty(n_trees * per, dtype=np.int64)
    right = np.empty(n_trees * per, dtype=np.int64)
    gain = np.empty(n_trees * per)
    leaf_class = np.empty(n_trees * per, dtype=np.int64)
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    yr = np.zeros(n)
    cand = np.arange(d)
    rows = np.arange(n)
    no_presort = np.zeros((0, 0), dtype=np.int64)
    no_vals = np.zeros((0, 0))
    for t in range(n_trees):
        state = splitmix64(seed ^ splitmix64(np.uint64(t)))
        if bootstrap:
            for i in range(n):
                state = splitmix64(state)
                rows[i] = np.int64(state % np.uint64(n))
        tseed = splitmix64(state)
        fe, th, le, ri, ga, order, assign = build_tree(
            X, yi, yr, rows, n_classes, 0, max_depth, min_samples_split, min_samples_leaf,
            max_features, cand, tseed, no_presort, no_vals)
        size = fe.shape[0]
        counts = np.zeros((size, n_classes))
        for q in range(order.shape[0]):
            counts[assign[q], yi[order[q]]] += 1.0
        o = offsets[t]
        for node in range(size):
            feature[o + node] = fe[node]
            threshold[o + node] = th[node]
            left[o + node] = le[node]
            right[o + node] = ri[node]
            gain[o + node] = ga[node]
            best = 0
            for c in range(1, n_classes):
                if counts[node, c] > counts[node, best]:
                    best = c
            leaf_class[o + node] = best
        offsets[t + 1] = o + size
    tot = offsets[n_trees]
    return (feature[:tot].copy(), threshold[:tot].copy(), left[:tot].copy(), right[:tot].copy(),
            gain[:tot].copy(), leaf_class[:tot].copy(), offsets)


@njit(cache=True, nogil=True)
def ensemble_leaves(feature, threshold, left, right, offsets, n_use, X):
    """Global leaf index reached by every row in each of the first ``n_use`` trees."""
    n = X.shape[0]
    out = np.empty((n_use, n), dtype=np.int64)
    for t in range(n_use):
        o = offsets[t]
        for i in range(n):
            node = 0
            while feature[o + node] >= 0:
                if X[i, feature[o + node]] <= threshold[o + node]:
                    node = left[o + node]
                else:
                    node = right[o + node]
            out[t, i] = o + node
    return out
