"""Compiled inner loops for regression-tree growth and traversal.

Trees are stored as flat node arrays: ``feature`` (-1 marks a leaf),
``threshold`` (go left when ``x <= threshold``), ``left``/``right`` child
indices relative to the tree root, and ``value`` (leaf output).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def presort(X, rows):
    """Per-feature ascending (stable) order of ``rows`` and the sorted values.

    Both results are (d, len(rows)); ``values[j, p] == X[order[j, p], j]``.
    """
    d = X.shape[1]
    order = np.empty((d, rows.shape[0]), dtype=np.int64)
    values = np.empty((d, rows.shape[0]))
    for j in range(d):
        col = X[rows, j]
        o = np.argsort(col, kind="mergesort")
        order[j, :] = rows[o]
        values[j, :] = col[o]
    return order, values


@njit(cache=True)
def grow_tree(X, order, values, residual, in_sample, max_depth, min_leaf, l2, min_gain, scale):
    """Grow one tree level by level on the rows flagged in ``in_sample``.

    ``order``/``values`` come from :func:`presort` over all candidate rows and
    are only read. Each level scans every feature's sorted order once,
    routing rows to their current node, so no per-node re-sorting is needed.

    Splits maximize the squared-error reduction
    ``GL^2/(nL+l2) + GR^2/(nR+l2) - G^2/(n+l2)``. Features are scanned in
    index order and thresholds in ascending order, and a candidate must beat
    the incumbent strictly, so ties keep the lowest feature, then the lowest
    threshold. Leaf values are ``scale * G / (n + l2)``.
    """
    n = X.shape[0]
    d, m = order.shape
    n_in = 0
    for r in range(n):
        if in_sample[r]:
            n_in += 1
    cap = 2 ** (max_depth + 1) - 1
    if cap > 2 * n_in + 1:
        cap = 2 * n_in + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    node_g = np.zeros(cap)
    node_n = np.zeros(cap, dtype=np.int64)

    inv = np.empty(n_in + 1)
    for k in range(n_in + 1):
        inv[k] = 1.0 / (k + l2) if k + l2 > 0 else 0.0

    nid = np.full(n, -1, dtype=np.int64)
    g_root = 0.0
    for r in range(n):
        if in_sample[r]:
            nid[r] = 0
            g_root += residual[r]
    node_g[0] = g_root
    node_n[0] = n_in
    value[0] = scale * g_root * inv[n_in]
    n_nodes = 1

    # per-node scratch, indexed by node id
    active = np.zeros(cap, dtype=np.bool_)
    parent = np.zeros(cap)
    best_gain = np.zeros(cap)
    best_f = np.full(cap, -1, dtype=np.int64)
    best_thr = np.zeros(cap)
    best_c = np.zeros(cap, dtype=np.int64)
    best_gl = np.zeros(cap)
    gl = np.zeros(cap)
    cl = np.zeros(cap, dtype=np.int64)
    last = np.zeros(cap)

    lo, hi = 0, 1  # nodes of the current level are ids lo..hi-1
    depth = 0
    while depth < max_depth and lo < hi:
        any_active = False
        for k in range(lo, hi):
            active[k] = node_n[k] >= 2 * min_leaf
            any_active = any_active or active[k]
            parent[k] = node_g[k] * node_g[k] * inv[node_n[k]]
            best_gain[k] = min_gain
            best_f[k] = -1
        if not any_active:
            break

        for j in range(d):
            for k in range(lo, hi):
                gl[k] = 0.0
                cl[k] = 0
            for p in range(m):
                r = order[j, p]
                k = nid[r]
                if k < 0 or not active[k]:
                    continue
                x = values[j, p]
                c = cl[k]
                # cut between the previous row of this node and this one
                if c >= min_leaf and node_n[k] - c >= min_leaf and x != last[k]:
                    g_left = gl[k]
                    g_right = node_g[k] - g_left
                    gain = g_left * g_left * inv[c] + g_right * g_right * inv[node_n[k] - c] - parent[k]
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_f[k] = j
                        best_thr[k] = last[k]
                        best_c[k] = c
                        best_gl[k] = g_left
                gl[k] += residual[r]
                cl[k] = c + 1
                last[k] = x

        new_lo = n_nodes
        for k in range(lo, hi):
            if best_f[k] < 0:
                continue
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            feature[k] = best_f[k]
            threshold[k] = best_thr[k]
            left[k] = lc
            right[k] = rc
            node_n[lc] = best_c[k]
            node_g[lc] = best_gl[k]
            node_n[rc] = node_n[k] - best_c[k]
            node_g[rc] = node_g[k] - best_gl[k]
            value[lc] = scale * node_g[lc] * inv[node_n[lc]]
            value[rc] = scale * node_g[rc] * inv[node_n[rc]]

        for r in range(n):
            k = nid[r]
            if k < 0:
                continue
            f = feature[k]
            if f < 0:
                nid[r] = -1
            elif X[r, f] <= threshold[k]:
                nid[r] = left[k]
            else:
                nid[r] = right[k]
        lo, hi = new_lo, n_nodes
        depth += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True)
def predict_tree(X, feature, threshold, left, right, value, out):
    """``out += tree(X)`` row by row."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@njit(cache=True)
def predict_forest(X, base, feature, threshold, left, right, value, roots, out):
    """Sum of ``base`` and every tree, added in tree order."""
    n_trees = roots.shape[0]
    for i in range(X.shape[0]):
        acc = base
        for t in range(n_trees):
            off = roots[t]
            node = 0
            while feature[off + node] >= 0:
                if X[i, feature[off + node]] <= threshold[off + node]:
                    node = left[off + node]
                else:
                    node = right[off + node]
            acc += value[off + node]
        out[i] = acc
