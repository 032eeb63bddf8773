"""Shared independent oracles for the test suite.

These deliberately avoid the library's hot paths: tree routing is a plain
per-sample loop, stage losses are recomputed from first principles, and
the 1-D minimizer is golden-section search.
"""

import numpy as np

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def stage_loss_leaf(r, t, theta, gamma):
    """gamma*|theta| - R*theta + T*(theta + theta^2/2), from scratch."""
    return gamma * abs(theta) - r * theta + t * (theta + 0.5 * theta * theta)


def golden_minimize_batch(r, t, gamma, lo=-50.0, hi=50.0, tol=1e-12):
    """Vectorized golden-section minimization of the leaf stage loss.

    Comparisons use the analytically expanded difference
    f(c) - f(d) = gamma(|c|-|d|) + (c-d)(-R + T + T(c+d)/2),
    which avoids the catastrophic cancellation of comparing two nearly
    equal loss values and lets the bracket shrink to ~1e-12.
    """
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), r.shape)
    a = np.full_like(r, lo)
    b = np.full_like(r, hi)
    while np.max(b - a) > tol:
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        diff = gamma * (np.abs(c) - np.abs(d)) + (c - d) * (
            -r + t + 0.5 * t * (c + d)
        )
        left_better = diff < 0  # f(c) < f(d)
        b = np.where(left_better, d, b)
        a = np.where(left_better, a, c)
    return 0.5 * (a + b)


def golden_minimize(fn_r, fn_t, fn_gamma, lo=-50.0, hi=50.0):
    """Scalar convenience wrapper around the batch minimizer."""
    return float(golden_minimize_batch(
        np.array([fn_r]), np.array([fn_t]), np.array([fn_gamma]), lo, hi
    )[0])


def route_cells(tree, features):
    """Per-sample python routing through a RegressionTree (oracle path)."""
    out = np.empty(features.shape[0], dtype=np.int64)
    for i, z in enumerate(features):
        nd = 0
        while tree.feature[nd] >= 0:
            if z[tree.feature[nd]] < tree.threshold[nd]:
                nd = tree.left[nd]
            else:
                nd = tree.right[nd]
        out[i] = nd
    return out


def node_members(tree, features):
    """Cells reaching each node (not only leaves), by recursive routing."""
    members = {0: np.arange(features.shape[0])}
    order = [0]
    for nd in order:
        if tree.feature[nd] < 0:
            continue
        cells = members[nd]
        go_left = features[cells, tree.feature[nd]] < tree.threshold[nd]
        members[int(tree.left[nd])] = cells[go_left]
        members[int(tree.right[nd])] = cells[~go_left]
        order.extend([int(tree.left[nd]), int(tree.right[nd])])
    return members


def stage_loss_total(tree, features, cell_r, cell_t, gamma, scores=None):
    """Quadratic stage loss of a whole tree, recomputed from scratch.

    ``scores``: leaf scores to evaluate at (default: the closed form from
    the recomputed leaf statistics).
    """
    leaves = route_cells(tree, features)
    total = 0.0
    for nd in np.unique(leaves):
        cells = leaves == nd
        r = float(cell_r[cells].sum())
        t = float(cell_t[cells].sum())
        if scores is None:
            d = r - t
            theta = np.sign(d) * max(abs(d) - gamma, 0.0) / t
        else:
            theta = float(scores[nd])
        total += stage_loss_leaf(r, t, theta, gamma)
    return total
