# cython: language_level=3
"""Compiled hot kernels: exact greedy tree growth, tree prediction, K sums.

Twin of ``ppboost._kernels_py``; the two backends follow the same
accumulation order so grown trees agree node for node.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

BACKEND_NAME = "compiled"


cdef inline double _loss_at_opt(double r, double t, double gamma) noexcept nogil:
    cdef double d = r - t
    cdef double theta
    if d > gamma:
        theta = (d - gamma) / t
    elif d < -gamma:
        theta = (d + gamma) / t
    else:
        theta = 0.0
    return gamma * fabs(theta) - r * theta + t * (theta + 0.5 * theta * theta)


cdef inline double _leaf_value(double r, double t, double gamma,
                               double cap) noexcept nogil:
    cdef double d = r - t
    cdef double theta
    if d > gamma:
        theta = (d - gamma) / t
    elif d < -gamma:
        theta = (d + gamma) / t
    else:
        return 0.0
    if theta > cap:
        return cap
    if theta < -cap:
        return -cap
    return theta


def grow_tree(const double[:, ::1] feat, const int[:, ::1] order,
              const double[::1] cell_r, const double[::1] cell_t,
              const int[:, ::1] subsets, double gamma, int max_depth,
              double min_gain, double max_leaf_abs):
    """Level-wise exact greedy growth; see the python twin for the contract."""
    cdef Py_ssize_t p = feat.shape[0]
    cdef Py_ssize_t n = feat.shape[1]
    cdef Py_ssize_t max_nodes = subsets.shape[0]
    cdef Py_ssize_t n_sub = subsets.shape[1]

    feature_arr = np.full(max_nodes, -1, dtype=np.int32)
    threshold_arr = np.zeros(max_nodes)
    left_arr = np.full(max_nodes, -1, dtype=np.int32)
    right_arr = np.full(max_nodes, -1, dtype=np.int32)
    value_arr = np.zeros(max_nodes)
    gain_arr = np.zeros(max_nodes)
    node_r_arr = np.zeros(max_nodes)
    node_t_arr = np.zeros(max_nodes)
    position_arr = np.zeros(n, dtype=np.int32)
    uses_arr = np.zeros((max_nodes, p), dtype=np.uint8)

    cdef int[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef double[::1] value = value_arr
    cdef double[::1] gain = gain_arr
    cdef double[::1] node_r = node_r_arr
    cdef double[::1] node_t = node_t_arr
    cdef int[::1] position = position_arr
    cdef unsigned char[:, ::1] uses = uses_arr

    cdef double[::1] acc_r = np.zeros(max_nodes)
    cdef double[::1] acc_t = np.zeros(max_nodes)
    cdef double[::1] prev_val = np.zeros(max_nodes)
    cdef double[::1] parent_loss = np.zeros(max_nodes)
    cdef double[::1] best_gain = np.zeros(max_nodes)
    cdef double[::1] best_thr = np.zeros(max_nodes)
    cdef int[::1] best_feat = np.zeros(max_nodes, dtype=np.int32)
    cdef unsigned char[::1] started = np.zeros(max_nodes, dtype=np.uint8)
    cdef unsigned char[::1] is_frontier = np.zeros(max_nodes, dtype=np.uint8)
    cdef int[::1] frontier = np.zeros(max_nodes, dtype=np.int32)
    cdef int[::1] next_frontier = np.zeros(max_nodes, dtype=np.int32)

    cdef Py_ssize_t i, j, k, ii, nd, f, depth
    cdef Py_ssize_t n_nodes = 1, n_frontier = 1, n_next
    cdef int any_user, split_any
    cdef double v, g, rem_t

    with nogil:
        for k in range(max_nodes):
            for ii in range(n_sub):
                j = subsets[k, ii]
                if 0 <= j < p:
                    uses[k, j] = 1

        for i in range(n):
            node_r[0] += cell_r[i]
            node_t[0] += cell_t[i]
        frontier[0] = 0

        for depth in range(max_depth):
            if n_frontier == 0 or n_nodes + 2 * n_frontier > max_nodes:
                break
            for ii in range(n_frontier):
                nd = frontier[ii]
                is_frontier[nd] = 1
                parent_loss[nd] = _loss_at_opt(node_r[nd], node_t[nd], gamma)
                best_gain[nd] = min_gain
                best_feat[nd] = -1

            for j in range(p):
                any_user = 0
                for ii in range(n_frontier):
                    nd = frontier[ii]
                    if uses[nd, j]:
                        any_user = 1
                        acc_r[nd] = 0.0
                        acc_t[nd] = 0.0
                        started[nd] = 0
                if not any_user:
                    continue
                for ii in range(n):
                    i = order[j, ii]
                    nd = position[i]
                    if not is_frontier[nd] or not uses[nd, j]:
                        continue
                    v = feat[j, i]
                    if started[nd] and v > prev_val[nd]:
                        rem_t = node_t[nd] - acc_t[nd]
                        if acc_t[nd] > 0.0 and rem_t > 0.0:
                            g = (parent_loss[nd]
                                 - _loss_at_opt(acc_r[nd], acc_t[nd], gamma)
                                 - _loss_at_opt(node_r[nd] - acc_r[nd], rem_t,
                                                gamma))
                            if g > best_gain[nd]:
                                best_gain[nd] = g
                                best_feat[nd] = <int> j
                                best_thr[nd] = 0.5 * (prev_val[nd] + v)
                    acc_r[nd] += cell_r[i]
                    acc_t[nd] += cell_t[i]
                    prev_val[nd] = v
                    started[nd] = 1

            split_any = 0
            n_next = 0
            for ii in range(n_frontier):
                nd = frontier[ii]
                is_frontier[nd] = 0
                if best_feat[nd] >= 0:
                    feature[nd] = best_feat[nd]
                    threshold[nd] = best_thr[nd]
                    left[nd] = <int> n_nodes
                    right[nd] = <int> (n_nodes + 1)
                    gain[nd] = best_gain[nd]
                    next_frontier[n_next] = <int> n_nodes
                    next_frontier[n_next + 1] = <int> (n_nodes + 1)
                    n_next += 2
                    n_nodes += 2
                    split_any = 1
                else:
                    value[nd] = _leaf_value(node_r[nd], node_t[nd], gamma,
                                        max_leaf_abs)
            if not split_any:
                n_frontier = 0
                break

            for i in range(n):
                nd = position[i]
                f = feature[nd]
                if f >= 0:
                    if feat[f, i] < threshold[nd]:
                        nd = left[nd]
                    else:
                        nd = right[nd]
                    position[i] = <int> nd
                    node_r[nd] += cell_r[i]
                    node_t[nd] += cell_t[i]

            for ii in range(n_next):
                frontier[ii] = next_frontier[ii]
            n_frontier = n_next

        for ii in range(n_frontier):
            nd = frontier[ii]
            if node_t[nd] > 0.0:
                value[nd] = _leaf_value(node_r[nd], node_t[nd], gamma,
                                        max_leaf_abs)
            else:
                value[nd] = 0.0

    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr[:n_nodes].copy(),
        gain_arr[:n_nodes].copy(),
        node_r_arr[:n_nodes].copy(),
        node_t_arr[:n_nodes].copy(),
        position_arr,
        n_nodes,
    )


def grow_group(const double[:, ::1] feat, const double[:, ::1] vsorted,
               const int[:, ::1] order,
               const double[::1] cell_r, const double[::1] cell_t,
               const int[:, :, ::1] subsets, double gamma, int max_depth,
               double min_gain, double max_leaf_abs):
    """Grow one iteration's group of trees sharing the stage masses.

    ``vsorted[j]`` holds feature j in sorted order, ``order[j]`` the
    matching cell ids.  The sorted-order gathers of cell_r/cell_t and the
    root-level split scan are computed once and shared by the whole group;
    deeper levels scan per-feature arrays compacted to the cells still
    sitting in splittable nodes.  Trees are identical to repeated
    ``grow_tree`` calls with the same per-tree subsets.

    Returns ``(trees, pred_sum)``: per-tree arrays
    ``(feature, threshold, left, right, value, gain)`` and the sum over
    trees of each cell's leaf score.
    """
    cdef Py_ssize_t n_trees = subsets.shape[0]
    cdef Py_ssize_t max_nodes = subsets.shape[1]
    cdef Py_ssize_t n_sub = subsets.shape[2]
    cdef Py_ssize_t p = feat.shape[0]
    cdef Py_ssize_t n = feat.shape[1]

    rs0_arr = np.empty((p, n))
    ts0_arr = np.empty((p, n))
    cdef double[:, ::1] rs0 = rs0_arr
    cdef double[:, ::1] ts0 = ts0_arr
    root_gain_arr = np.full(p, -np.inf)
    root_thr_arr = np.zeros(p)
    cdef double[::1] root_gain = root_gain_arr
    cdef double[::1] root_thr = root_thr_arr

    cdef double root_r = 0.0, root_t = 0.0, root_loss = 0.0
    cdef Py_ssize_t i, j, k, ii, nd, f, depth, t_idx
    cdef double v, g, acc_r1, acc_t1, prev1, rem_t

    with nogil:
        for j in range(p):
            for ii in range(n):
                i = order[j, ii]
                rs0[j, ii] = cell_r[i]
                ts0[j, ii] = cell_t[i]
        for i in range(n):
            root_r += cell_r[i]
            root_t += cell_t[i]
        root_loss = _loss_at_opt(root_r, root_t, gamma)
        if max_depth > 0:
            for j in range(p):
                acc_r1 = 0.0
                acc_t1 = 0.0
                prev1 = 0.0
                for ii in range(n):
                    v = vsorted[j, ii]
                    if ii > 0 and v > prev1:
                        rem_t = root_t - acc_t1
                        if acc_t1 > 0.0 and rem_t > 0.0:
                            g = (root_loss
                                 - _loss_at_opt(acc_r1, acc_t1, gamma)
                                 - _loss_at_opt(root_r - acc_r1, rem_t, gamma))
                            if g > root_gain[j]:
                                root_gain[j] = g
                                root_thr[j] = 0.5 * (prev1 + v)
                    acc_r1 += rs0[j, ii]
                    acc_t1 += ts0[j, ii]
                    prev1 = v

    # per-node scratch
    cdef double[::1] acc_r = np.zeros(max_nodes)
    cdef double[::1] acc_t = np.zeros(max_nodes)
    cdef double[::1] prev_val = np.zeros(max_nodes)
    cdef double[::1] parent_loss = np.zeros(max_nodes)
    cdef double[::1] best_gain = np.zeros(max_nodes)
    cdef double[::1] best_thr = np.zeros(max_nodes)
    cdef int[::1] best_feat = np.zeros(max_nodes, dtype=np.int32)
    cdef unsigned char[::1] started = np.zeros(max_nodes, dtype=np.uint8)
    cdef unsigned char[::1] active_j = np.zeros(max_nodes, dtype=np.uint8)
    cdef unsigned char[:, ::1] uses = np.zeros((max_nodes, p), dtype=np.uint8)
    cdef int[::1] frontier = np.zeros(max_nodes, dtype=np.int32)
    cdef int[::1] next_frontier = np.zeros(max_nodes, dtype=np.int32)

    cdef int[::1] position = np.zeros(n, dtype=np.int32)

    pred_arr = np.zeros(n)
    cdef double[::1] pred_sum = pred_arr

    cdef int[::1] feature
    cdef double[::1] threshold
    cdef int[::1] left
    cdef int[::1] right
    cdef double[::1] value
    cdef double[::1] gain
    cdef double[::1] node_r
    cdef double[::1] node_t

    cdef Py_ssize_t n_nodes, n_frontier, n_next
    cdef int any_user, split_any, best_j
    cdef double bg, bt

    trees = []
    for t_idx in range(n_trees):
        feature_arr = np.full(max_nodes, -1, dtype=np.int32)
        threshold_arr = np.zeros(max_nodes)
        left_arr = np.full(max_nodes, -1, dtype=np.int32)
        right_arr = np.full(max_nodes, -1, dtype=np.int32)
        value_arr = np.zeros(max_nodes)
        gain_arr = np.zeros(max_nodes)
        node_r_arr = np.zeros(max_nodes)
        node_t_arr = np.zeros(max_nodes)
        feature = feature_arr
        threshold = threshold_arr
        left = left_arr
        right = right_arr
        value = value_arr
        gain = gain_arr
        node_r = node_r_arr
        node_t = node_t_arr
        n_nodes = 1

        with nogil:
            node_r[0] = root_r
            node_t[0] = root_t

            bg = min_gain
            best_j = -1
            bt = 0.0
            if max_depth > 0:
                for ii in range(n_sub):
                    j = subsets[t_idx, 0, ii]
                    if 0 <= j < p and root_gain[j] > bg:
                        bg = root_gain[j]
                        best_j = <int> j
                        bt = root_thr[j]

            if best_j < 0:
                if root_t > 0.0:
                    value[0] = _leaf_value(root_r, root_t, gamma,
                                           max_leaf_abs)
                for i in range(n):
                    pred_sum[i] += value[0]
                n_frontier = 0
            else:
                for k in range(max_nodes):
                    for ii in range(p):
                        uses[k, ii] = 0
                    for ii in range(n_sub):
                        j = subsets[t_idx, k, ii]
                        if 0 <= j < p:
                            uses[k, j] = 1

                feature[0] = best_j
                threshold[0] = bt
                left[0] = 1
                right[0] = 2
                gain[0] = bg
                n_nodes = 3
                for i in range(n):
                    if feat[best_j, i] < bt:
                        position[i] = 1
                    else:
                        position[i] = 2
                    node_r[position[i]] += cell_r[i]
                    node_t[position[i]] += cell_t[i]
                frontier[0] = 1
                frontier[1] = 2
                n_frontier = 2

                for depth in range(1, max_depth):
                    if n_frontier == 0 or n_nodes + 2 * n_frontier > max_nodes:
                        break
                    for ii in range(n_frontier):
                        nd = frontier[ii]
                        parent_loss[nd] = _loss_at_opt(node_r[nd], node_t[nd],
                                                       gamma)
                        best_gain[nd] = min_gain
                        best_feat[nd] = -1

                    for j in range(p):
                        any_user = 0
                        for ii in range(n_frontier):
                            nd = frontier[ii]
                            if uses[nd, j]:
                                any_user = 1
                                active_j[nd] = 1
                                acc_r[nd] = 0.0
                                acc_t[nd] = 0.0
                                started[nd] = 0
                            else:
                                active_j[nd] = 0
                        if not any_user:
                            continue
                        for ii in range(n):
                            nd = position[order[j, ii]]
                            if not active_j[nd]:
                                continue
                            v = vsorted[j, ii]
                            if started[nd] and v > prev_val[nd]:
                                rem_t = node_t[nd] - acc_t[nd]
                                if acc_t[nd] > 0.0 and rem_t > 0.0:
                                    g = (parent_loss[nd]
                                         - _loss_at_opt(acc_r[nd], acc_t[nd],
                                                        gamma)
                                         - _loss_at_opt(node_r[nd] - acc_r[nd],
                                                        rem_t, gamma))
                                    if g > best_gain[nd]:
                                        best_gain[nd] = g
                                        best_feat[nd] = <int> j
                                        best_thr[nd] = 0.5 * (prev_val[nd] + v)
                            acc_r[nd] += rs0[j, ii]
                            acc_t[nd] += ts0[j, ii]
                            prev_val[nd] = v
                            started[nd] = 1

                    split_any = 0
                    n_next = 0
                    for ii in range(n_frontier):
                        nd = frontier[ii]
                        active_j[nd] = 0
                        if best_feat[nd] >= 0:
                            feature[nd] = best_feat[nd]
                            threshold[nd] = best_thr[nd]
                            left[nd] = <int> n_nodes
                            right[nd] = <int> (n_nodes + 1)
                            gain[nd] = best_gain[nd]
                            next_frontier[n_next] = <int> n_nodes
                            next_frontier[n_next + 1] = <int> (n_nodes + 1)
                            n_next += 2
                            n_nodes += 2
                            split_any = 1
                        else:
                            value[nd] = _leaf_value(node_r[nd], node_t[nd], gamma,
                                                    max_leaf_abs)
                    if not split_any:
                        n_frontier = 0
                        break

                    for i in range(n):
                        nd = position[i]
                        f = feature[nd]
                        if f >= 0:
                            if feat[f, i] < threshold[nd]:
                                nd = left[nd]
                            else:
                                nd = right[nd]
                            position[i] = <int> nd
                            node_r[nd] += cell_r[i]
                            node_t[nd] += cell_t[i]

                    for ii in range(n_next):
                        frontier[ii] = next_frontier[ii]
                    n_frontier = n_next

                for ii in range(n_frontier):
                    nd = frontier[ii]
                    if node_t[nd] > 0.0:
                        value[nd] = _leaf_value(node_r[nd], node_t[nd], gamma,
                                        max_leaf_abs)
                    else:
                        value[nd] = 0.0

                for i in range(n):
                    pred_sum[i] += value[position[i]]
                for i in range(n):
                    position[i] = 0

        trees.append((
            feature_arr[:n_nodes].copy(),
            threshold_arr[:n_nodes].copy(),
            left_arr[:n_nodes].copy(),
            right_arr[:n_nodes].copy(),
            value_arr[:n_nodes].copy(),
            gain_arr[:n_nodes].copy(),
        ))
    return trees, pred_arr


def predict_many(const int[::1] feature, const double[::1] threshold,
                 const int[::1] left, const int[::1] right,
                 const double[::1] value, const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, nd
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            nd = 0
            while feature[nd] >= 0:
                if X[i, feature[nd]] < threshold[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            out[i] = value[nd]
    return out_arr


def k_pair_sum(const double[::1] x, const double[::1] y,
               const double[::1] lam, double m, double a, double b):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double m2 = m * m
    cdef double dx, dy, total = 0.0
    with nogil:
        for i in range(n - 1):
            for j in range(i + 1, n):
                dx = fabs(x[i] - x[j])
                if dx > m:
                    continue
                dy = fabs(y[i] - y[j])
                if dx * dx + dy * dy <= m2:
                    total += 2.0 / (lam[i] * lam[j] * (a - dx) * (b - dy))
    return total
