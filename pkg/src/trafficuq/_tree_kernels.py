"""Compiled CART builders and traversal.

Trees are flat arrays: ``feature`` (-1 marks a leaf), ``threshold``,
``left``, ``right``, ``value`` and ``weight`` (sum of sample weights in the
node). Samples go left when ``x[feature] <= threshold``.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _alloc(cap):
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)
    return feature, threshold, left, right, value, weight


@njit(cache=True, nogil=True)
def _node_stats(X, y, w, idx, start, end):
    W = 0.0
    Sy = 0.0
    ymin = np.inf
    ymax = -np.inf
    for k in range(start, end):
        i = idx[k]
        W += w[i]
        Sy += w[i] * y[i]
        if y[i] < ymin:
            ymin = y[i]
        if y[i] > ymax:
            ymax = y[i]
    return W, Sy, ymin, ymax


@njit(cache=True, nogil=True)
def _candidate_features(feats, n_sub):
    d = feats.shape[0]
    if n_sub >= d:
        return d
    # partial Fisher-Yates: first n_sub entries become a uniform subset
    for a in range(n_sub):
        b = a + np.random.randint(d - a)
        tmp = feats[a]
        feats[a] = feats[b]
        feats[b] = tmp
    return n_sub


@njit(cache=True, nogil=True)
def build_best(X, y, w, order, max_depth, min_leaf, n_sub, seed):
    """Exact variance-reduction CART over presorted column orders.

    ``order[f]`` is the argsort of column ``f`` over all rows; rows with zero
    weight are ignored (bootstrap out-of-bag rows).
    """
    np.random.seed(seed)
    n, d = X.shape
    m = 0
    for i in range(n):
        if w[i] > 0:
            m += 1
    S = np.empty((d, m), np.int64)
    V = np.empty((d, m))
    for f in range(d):
        k = 0
        for j in range(n):
            i = order[f, j]
            if w[i] > 0:
                S[f, k] = i
                V[f, k] = X[i, f]
                k += 1
    wy = w * y
    cap = 2 * m + 1
    feature, threshold, left, right, value, weight = _alloc(cap)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    buf = np.empty(m, np.int64)
    vbuf = np.empty(m)
    goes_left = np.zeros(n, np.bool_)
    feats = np.arange(d)

    n_nodes = 1
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        W, Sy, ymin, ymax = _node_stats(X, y, w, S[0], start, end)
        value[node] = Sy / W
        weight[node] = W
        if (max_depth >= 0 and depth >= max_depth) or ymin == ymax or W < 2 * min_leaf:
            continue

        best_score = Sy * Sy / W
        best_f = -1
        best_thr = 0.0
        nf = _candidate_features(feats, n_sub)
        for fi in range(nf):
            f = feats[fi]
            wl = 0.0
            syl = 0.0
            for k in range(start, end - 1):
                i = S[f, k]
                wl += w[i]
                syl += wy[i]
                xa = V[f, k]
                xb = V[f, k + 1]
                if xa < xb and wl >= min_leaf and W - wl >= min_leaf:
                    wr = W - wl
                    syr = Sy - syl
                    score = syl * syl / wl + syr * syr / wr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        thr = xa + (xb - xa) * 0.5
                        if thr >= xb:
                            thr = xa
                        best_thr = thr
        if best_f < 0:
            continue

        nl = 0
        for k in range(start, end):
            i = S[0, k]
            g = X[i, best_f] <= best_thr
            goes_left[i] = g
            if g:
                nl += 1
        for f in range(d):
            a = start
            b = 0
            for k in range(start, end):
                i = S[f, k]
                if goes_left[i]:
                    S[f, a] = i
                    V[f, a] = V[f, k]
                    a += 1
                else:
                    buf[b] = i
                    vbuf[b] = V[f, k]
                    b += 1
            for k in range(b):
                S[f, a + k] = buf[k]
                V[f, a + k] = vbuf[k]

        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is expanded first
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), weight[:n_nodes].copy())


@njit(cache=True, nogil=True)
def build_random(X, y, w, max_depth, min_leaf, n_sub, seed):
    """Extremely randomized tree: one uniform threshold per candidate feature."""
    np.random.seed(seed)
    n, d = X.shape
    m = 0
    for i in range(n):
        if w[i] > 0:
            m += 1
    idx = np.empty(m, np.int64)
    k = 0
    for i in range(n):
        if w[i] > 0:
            idx[k] = i
            k += 1
    cap = 2 * m + 1
    feature, threshold, left, right, value, weight = _alloc(cap)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    feats = np.arange(d)

    n_nodes = 1
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        W, Sy, ymin, ymax = _node_stats(X, y, w, idx, start, end)
        value[node] = Sy / W
        weight[node] = W
        if (max_depth >= 0 and depth >= max_depth) or ymin == ymax or W < 2 * min_leaf:
            continue

        best_score = Sy * Sy / W
        best_f = -1
        best_thr = 0.0
        nf = _candidate_features(feats, n_sub)
        for fi in range(nf):
            f = feats[fi]
            lo = np.inf
            hi = -np.inf
            for k in range(start, end):
                v = X[idx[k], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if not lo < hi:
                continue
            thr = lo + (hi - lo) * np.random.random()
            if thr >= hi:
                thr = lo
            wl = 0.0
            syl = 0.0
            for k in range(start, end):
                i = idx[k]
                if X[i, f] <= thr:
                    wl += w[i]
                    syl += w[i] * y[i]
            if wl < min_leaf or W - wl < min_leaf:
                continue
            syr = Sy - syl
            score = syl * syl / wl + syr * syr / (W - wl)
            if score > best_score:
                best_score = score
                best_f = f
                best_thr = thr
        if best_f < 0:
            continue

        a = start
        b = end - 1
        while a <= b:
            if X[idx[a], best_f] <= best_thr:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        nl = a - start

        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), weight[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@njit(cache=True, nogil=True)
def predict_forest(X, feature, threshold, left, right, value, roots):
    """Per-tree predictions for concatenated trees; children indices are global."""
    n = X.shape[0]
    T = roots.shape[0]
    out = np.empty((n, T))
    for t in range(T):
        for r in range(n):
            node = roots[t]
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r, t] = value[node]
    return out
