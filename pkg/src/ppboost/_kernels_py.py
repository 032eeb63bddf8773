"""Pure NumPy implementations of the hot kernels.

This module mirrors the compiled extension ``ppboost._speedups``: same entry
points, same semantics, and the same accumulation order (per-node prefix
sums walk cells in globally sorted feature order; node totals accumulate in
ascending cell-index order), so both backends grow identical trees.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _seq_sum(values: np.ndarray) -> float:
    """Sum in strict left-to-right order (matches a plain C loop)."""
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def _loss_at_opt(r, t, gamma):
    """Penalized quadratic node loss evaluated at the closed-form score.

    theta = sgn(r - t) * max(|r - t| - gamma, 0) / t
    loss  = gamma*|theta| - r*theta + t*(theta + 0.5*theta^2)
    """
    d = np.asarray(r, dtype=np.float64) - t
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(
            d > gamma, (d - gamma) / t, np.where(d < -gamma, (d + gamma) / t, 0.0)
        )
        return gamma * np.abs(theta) - r * theta + t * (theta + 0.5 * theta * theta)


def _leaf_value(r, t, gamma, cap):
    d = r - t
    if d > gamma:
        theta = (d - gamma) / t
    elif d < -gamma:
        theta = (d + gamma) / t
    else:
        return 0.0
    return min(max(theta, -cap), cap)


def grow_tree(feat, order, cell_r, cell_t, subsets, gamma, max_depth,
              min_gain, max_leaf_abs=np.inf):
    """Grow one regression tree by exact greedy level-wise search.

    Parameters
    ----------
    feat : (p, n) float64
        Feature-major covariate values of the quadrature cells.
    order : (p, n) int32
        Stable argsort of each feature row.
    cell_r : (n,) float64
        Per-cell event-weight sums (the R statistic contributions).
    cell_t : (n,) float64
        Per-cell integral masses w * exp(phi) * volume (T contributions).
    subsets : (max_nodes, n_sub) int32
        Sorted candidate feature ids per node slot.
    gamma, max_depth, min_gain
        L1 penalty, depth cap, and minimum accepted split gain.

    Returns
    -------
    (feature, threshold, left, right, value, gain, node_r, node_t,
     leaf_of_cell, n_nodes)
    """
    p, n = feat.shape
    max_nodes = subsets.shape[0]
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes)
    gain = np.zeros(max_nodes)
    node_r = np.zeros(max_nodes)
    node_t = np.zeros(max_nodes)

    position = np.zeros(n, dtype=np.int32)
    node_r[0] = _seq_sum(cell_r)
    node_t[0] = _seq_sum(cell_t)

    frontier = [0]
    n_nodes = 1
    for _depth in range(max_depth):
        if not frontier or n_nodes + 2 * len(frontier) > max_nodes:
            break
        parent_loss = {nd: float(_loss_at_opt(node_r[nd], node_t[nd], gamma))
                       for nd in frontier}
        best = {nd: (min_gain, -1, 0.0) for nd in frontier}
        for j in range(p):
            users = [nd for nd in frontier if j in subsets[nd]]
            if not users:
                continue
            sidx = order[j]
            pos_sorted = position[sidx]
            for nd in users:
                cells = sidx[pos_sorted == nd]
                if cells.size < 2:
                    continue
                v = feat[j, cells]
                bmask = v[:-1] < v[1:]
                if not bmask.any():
                    continue
                acc_r = np.cumsum(cell_r[cells])[:-1][bmask]
                acc_t = np.cumsum(cell_t[cells])[:-1][bmask]
                rem_r = node_r[nd] - acc_r
                rem_t = node_t[nd] - acc_t
                g = (
                    parent_loss[nd]
                    - _loss_at_opt(acc_r, acc_t, gamma)
                    - _loss_at_opt(rem_r, rem_t, gamma)
                )
                g = np.where((acc_t > 0.0) & (rem_t > 0.0), g, -np.inf)
                k = int(np.argmax(g))  # first max: lowest threshold wins ties
                if g[k] > best[nd][0]:
                    thr = 0.5 * (v[:-1][bmask][k] + v[1:][bmask][k])
                    best[nd] = (float(g[k]), j, thr)

        split_any = False
        children = []
        for nd in frontier:
            g, j, thr = best[nd]
            if j >= 0:
                feature[nd] = j
                threshold[nd] = thr
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                gain[nd] = g
                children.extend((n_nodes, n_nodes + 1))
                n_nodes += 2
                split_any = True
            else:
                value[nd] = _leaf_value(node_r[nd], node_t[nd], gamma,
                        max_leaf_abs)
        if not split_any:
            frontier = []
            break

        # Route cells of split nodes and recompute child stats in
        # ascending cell-index order.
        f_of_cell = feature[position]
        moved = f_of_cell >= 0
        rows = np.nonzero(moved)[0]
        if rows.size:
            nd_rows = position[rows]
            vals = feat[f_of_cell[rows], rows]
            position[rows] = np.where(
                vals < threshold[nd_rows], left[nd_rows], right[nd_rows]
            ).astype(np.int32)
            # moved rows all land in freshly created children
            node_r[:n_nodes] += np.bincount(
                position[rows], weights=cell_r[rows], minlength=n_nodes
            )[:n_nodes]
            node_t[:n_nodes] += np.bincount(
                position[rows], weights=cell_t[rows], minlength=n_nodes
            )[:n_nodes]
        frontier = children

    for nd in frontier:
        value[nd] = _leaf_value(node_r[nd], node_t[nd], gamma,
                        max_leaf_abs) if node_t[nd] > 0 else 0.0

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        gain[:n_nodes].copy(),
        node_r[:n_nodes].copy(),
        node_t[:n_nodes].copy(),
        position,
        n_nodes,
    )


def grow_group(feat, vsorted, order, cell_r, cell_t, subsets, gamma,
               max_depth, min_gain, max_leaf_abs=np.inf):
    """Grow one iteration's group of trees; see the compiled twin.

    The fallback simply grows the trees one by one (``vsorted`` is an
    optimization input used only by the compiled backend).
    """
    del vsorted  # same information as feat + order
    n = feat.shape[1]
    pred_sum = np.zeros(n)
    trees = []
    for t in range(subsets.shape[0]):
        (feature, threshold, left, right, value, gain, _nr, _nt,
         leaf_of_cell, _n_nodes) = grow_tree(
            feat, order, cell_r, cell_t, subsets[t], gamma, max_depth,
            min_gain, max_leaf_abs
        )
        pred_sum += value[leaf_of_cell]
        trees.append((feature, threshold, left, right, value, gain))
    return trees, pred_sum


def predict_many(feature, threshold, left, right, value, X):
    """Route each row of X through the tree; returns leaf scores."""
    n = X.shape[0]
    nd = np.zeros(n, dtype=np.int64)
    while True:
        f = feature[nd]
        rows = np.nonzero(f >= 0)[0]
        if rows.size == 0:
            break
        cur = nd[rows]
        vals = X[rows, f[rows]]
        nd[rows] = np.where(vals < threshold[cur], left[cur], right[cur])
    return value[nd].astype(np.float64)


def k_pair_sum(x, y, lam, m, a, b):
    """Ordered-pair sum of the translation-corrected K statistic.

    Each unordered pair of distinct events within distance m contributes
    twice 1 / (lam_i * lam_j * (a - |dx|) * (b - |dy|)).
    """
    n = x.shape[0]
    m2 = m * m
    total = 0.0
    for i in range(n - 1):
        dx = np.abs(x[i + 1 :] - x[i])
        dy = np.abs(y[i + 1 :] - y[i])
        close = dx * dx + dy * dy <= m2
        if close.any():
            contrib = 1.0 / (
                lam[i] * lam[i + 1 :][close] * (a - dx[close]) * (b - dy[close])
            )
            total += 2.0 * float(np.sum(contrib))
    return total
