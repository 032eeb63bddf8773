"""Regression-tree core: leaf scores, exact greedy splits, tree growth.

One boosting stage minimizes the penalized quadratic loss

    sum_v [ gamma*|theta_v| - R_v*theta_v + T_v*(theta_v + theta_v^2/2) ]

over the leaves v of a candidate tree, where R_v collects the event weights
routed to the leaf and T_v the weighted, exponentiated-prior integral mass
of the leaf's quadrature cells.  The optimal leaf score has the closed form
``sgn(R-T) * max(|R-T| - gamma, 0) / T`` (a soft threshold), which makes the
exact greedy split search a matter of prefix sums over sorted cell values.

Split candidates are the midpoints between consecutive distinct sorted
covariate values of the node's quadrature cells; events inherit the
covariates of their cell, so cell values are the finest resolution at which
the loss can change.  Routing sends a vector left iff ``z_j < t`` (ties go
right).  Ties between equal-gain splits resolve to the lowest feature
index, then the lowest threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from ._kernels_py import _loss_at_opt
from .errors import ContractError, DegenerateLeafError

__all__ = [
    "LeafStats",
    "leaf_score",
    "leaf_loss",
    "SplitDecision",
    "best_split",
    "StageData",
    "TreeGrower",
    "RegressionTree",
    "grow_tree",
    "predict_tree",
]


@dataclass(frozen=True)
class LeafStats:
    """Leaf aggregates: event-weight sum R and integral mass T."""

    r: float
    t: float


def leaf_score(r, t, gamma):
    """Closed-form penalized leaf score; soft-thresholds the gradient."""
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0.0):
        raise DegenerateLeafError("leaf integral mass T must be positive")
    if np.any(gamma < 0):
        raise ContractError("gamma must be nonnegative")
    d = r - t
    out = np.where(
        d > gamma, (d - gamma) / t, np.where(d < -gamma, (d + gamma) / t, 0.0)
    )
    return float(out) if out.ndim == 0 else out

def leaf_loss(r, t, theta, gamma):
    """Stage loss contribution of one leaf at score ``theta``."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    out = gamma * np.abs(theta) - r * theta + t * (theta + 0.5 * theta * theta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SplitDecision:
    feature: int
    threshold: float
    gain: float


class StageData:
    """Frozen inputs of one boosting stage.

    Parameters
    ----------
    features : (n_cells, p) float64
        Covariate values at the quadrature cell centers.
    cell_weight : (n_cells,) float64
        Spatial weights w(t_i), strictly positive.
    exp_phi : (n_cells,) float64
        exp of the prior log-intensity at the cell centers.
    volumes : (n_cells,) float64
        Cell areas.
    event_cells : (n_events,) int
        Flat cell index of each event.
    event_weight : (n_events,) float64
        Spatial weights w(x) at the events, strictly positive.
    """

    def __init__(self, features, cell_weight, exp_phi, volumes, event_cells,
                 event_weight):
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ContractError("features must be (n_cells, p)")
        n = features.shape[0]
        cell_weight = np.asarray(cell_weight, dtype=np.float64)
        exp_phi = np.asarray(exp_phi, dtype=np.float64)
        volumes = np.asarray(volumes, dtype=np.float64)
        event_cells = np.asarray(event_cells, dtype=np.int64).ravel()
        event_weight = np.asarray(event_weight, dtype=np.float64).ravel()
        for name, arr in (("cell_weight", cell_weight), ("exp_phi", exp_phi),
                          ("volumes", volumes)):
            if arr.shape != (n,):
                raise ContractError(f"{name} must have one value per cell")
        if event_cells.shape != event_weight.shape:
            raise ContractError("event_cells and event_weight disagree in length")
        if np.any(cell_weight <= 0) or np.any(event_weight <= 0):
            raise ContractError("stage weights must be strictly positive")
        if not (np.all(np.isfinite(exp_phi)) and np.all(exp_phi > 0)):
            raise ContractError("exp_phi must be finite and positive")
        if event_cells.size and (event_cells.min() < 0 or event_cells.max() >= n):
            raise ContractError("event cell index out of range")
        self.features = features
        self.cell_weight = cell_weight
        self.exp_phi = exp_phi
        self.volumes = volumes
        self.event_cells = event_cells
        self.event_weight = event_weight
        # kernel aggregates: events collapse onto their cells
        self.cell_r = np.bincount(event_cells, weights=event_weight, minlength=n)
        self.cell_t = cell_weight * exp_phi * volumes

    @property
    def n_cells(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def best_split(stage: StageData, feature_ids, gamma, cells=None, min_gain=0.0):
    """Exact greedy search over one node; returns the best positive-gain split.

    ``cells`` restricts the node to a subset of quadrature cell indices
    (default: all cells).  Returns ``None`` when no candidate threshold
    improves the stage loss by more than ``min_gain``.
    """
    if cells is None:
        cells = np.arange(stage.n_cells)
    else:
        cells = np.asarray(cells, dtype=np.int64)
    if cells.size == 0:
        raise ContractError("node must contain at least one quadrature cell")
    cell_r = stage.cell_r[cells]
    cell_t = stage.cell_t[cells]
    r_tot = float(np.cumsum(cell_r)[-1])
    t_tot = float(np.cumsum(cell_t)[-1])
    parent = float(_loss_at_opt(r_tot, t_tot, gamma))

    best = None
    best_gain = float(min_gain)
    for j in sorted(int(f) for f in np.asarray(feature_ids).ravel()):
        v_all = stage.features[cells, j]
        sidx = np.argsort(v_all, kind="stable")
        v = v_all[sidx]
        bmask = v[:-1] < v[1:]
        if not bmask.any():
            continue
        acc_r = np.cumsum(cell_r[sidx])[:-1][bmask]
        acc_t = np.cumsum(cell_t[sidx])[:-1][bmask]
        g = (parent - _loss_at_opt(acc_r, acc_t, gamma)
             - _loss_at_opt(r_tot - acc_r, t_tot - acc_t, gamma))
        g = np.where((acc_t > 0.0) & (t_tot - acc_t > 0.0), g, -np.inf)
        k = int(np.argmax(g))
        if g[k] > best_gain:
            best_gain = float(g[k])
            thr = 0.5 * (v[:-1][bmask][k] + v[1:][bmask][k])
            best = SplitDecision(j, float(thr), best_gain)
    return best


class RegressionTree:
    """Binary regression tree in flat-array form.

    ``feature[i] == -1`` marks node ``i`` as a leaf scoring ``value[i]``;
    otherwise the node routes left iff ``z[feature[i]] < threshold[i]``.
    Zero-score leaves produced by the soft threshold are kept: they are
    prediction-equivalent to pruning them.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value", "gain")

    def __init__(self, feature, threshold, left, right, value, gain=None):
        self.feature = np.ascontiguousarray(feature, dtype=np.int32)
        self.threshold = np.ascontiguousarray(threshold, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.int32)
        self.right = np.ascontiguousarray(right, dtype=np.int32)
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.gain = None if gain is None else np.ascontiguousarray(gain, np.float64)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]

    def predict(self, z) -> float:
        z = np.asarray(z, dtype=np.float64)
        nd = 0
        while self.feature[nd] >= 0:
            nd = self.left[nd] if z[self.feature[nd]] < self.threshold[nd] \
                else self.right[nd]
        return float(self.value[nd])

    def predict_many(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return kernels.predict_many(self.feature, self.threshold, self.left,
                                    self.right, self.value, X)

    def internal_nodes(self) -> np.ndarray:
        return np.nonzero(self.feature >= 0)[0]

    def equals(self, other: "RegressionTree") -> bool:
        return (
            np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.value, other.value)
        )

    def to_records(self) -> list[dict]:
        records = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                records.append({"leaf": float(self.value[i])})
            else:
                records.append(
                    {
                        "feature": int(self.feature[i]),
                        "threshold": float(self.threshold[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                    }
                )
        return records

    @classmethod
    def from_records(cls, records) -> "RegressionTree":
        n = len(records)
        feature = np.full(n, -1, dtype=np.int32)
        threshold = np.zeros(n)
        leftarr = np.full(n, -1, dtype=np.int32)
        rightarr = np.full(n, -1, dtype=np.int32)
        value = np.zeros(n)
        for i, rec in enumerate(records):
            if "leaf" in rec:
                value[i] = rec["leaf"]
            else:
                feature[i] = rec["feature"]
                threshold[i] = rec["threshold"]
                leftarr[i] = rec["left"]
                rightarr[i] = rec["right"]
        return cls(feature, threshold, leftarr, rightarr, value)


class TreeGrower:
    """Reusable exact-greedy grower over one fixed covariate matrix.

    The feature-major copy and the per-feature stable sort are computed once
    and shared by every tree grown on the same cells (the covariates never
    change within a fit, only the per-cell masses do).
    """

    def __init__(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ContractError("features must be a nonempty (n_cells, p) matrix")
        self.n_cells, self.p = features.shape
        self._feat = np.ascontiguousarray(features.T)
        self._order = np.ascontiguousarray(
            np.argsort(self._feat, axis=1, kind="stable").astype(np.int32)
        )
        self._vsorted = np.ascontiguousarray(
            np.take_along_axis(self._feat, self._order.astype(np.int64), axis=1)
        )

    @staticmethod
    def max_nodes(max_depth: int) -> int:
        return 2 ** (max_depth + 1) - 1

    def subsets(self, n_sub: int, max_depth: int, rng) -> np.ndarray:
        """Sorted per-node-slot candidate feature ids."""
        max_nodes = self.max_nodes(max_depth)
        n_sub = min(max(1, n_sub), self.p)
        if n_sub >= self.p:
            return np.ascontiguousarray(
                np.tile(np.arange(self.p, dtype=np.int32), (max_nodes, 1))
            )
        base = np.tile(np.arange(self.p), (max_nodes, 1))
        picks = rng.permuted(base, axis=1)[:, :n_sub]
        return np.ascontiguousarray(np.sort(picks, axis=1).astype(np.int32))

    def grow(self, cell_r, cell_t, gamma, max_depth, subsets,
             min_gain=0.0, max_leaf_abs=np.inf):
        """Grow one tree; returns ``(tree, leaf_of_cell)``."""
        cell_r = np.ascontiguousarray(cell_r, dtype=np.float64)
        cell_t = np.ascontiguousarray(cell_t, dtype=np.float64)
        if cell_r.shape != (self.n_cells,) or cell_t.shape != (self.n_cells,):
            raise ContractError("cell_r/cell_t must have one value per cell")
        if max_depth < 0:
            raise ContractError("max_depth must be nonnegative")
        if not np.all(cell_t >= 0) or float(np.sum(cell_t)) <= 0.0:
            raise DegenerateLeafError("total integral mass must be positive")
        subsets = np.ascontiguousarray(subsets, dtype=np.int32)
        if max_depth == 0:
            r_tot = float(np.cumsum(cell_r)[-1])
            t_tot = float(np.cumsum(cell_t)[-1])
            score = float(np.clip(leaf_score(r_tot, t_tot, gamma),
                                  -max_leaf_abs, max_leaf_abs))
            tree = RegressionTree([-1], [0.0], [-1], [-1], [score], [0.0])
            return tree, np.zeros(self.n_cells, dtype=np.int32)
        if subsets.shape[0] < self.max_nodes(max_depth):
            raise ContractError("subsets must cover every potential node slot")
        (feature, threshold, left, right, value, gain, _node_r, _node_t,
         leaf_of_cell, _n) = kernels.grow_tree(
            self._feat, self._order, cell_r, cell_t, subsets,
            float(gamma), int(max_depth), float(min_gain),
            float(max_leaf_abs),
        )
        tree = RegressionTree(feature, threshold, left, right, value, gain)
        return tree, leaf_of_cell

    def grow_group(self, cell_r, cell_t, gamma, max_depth, subsets,
                   min_gain=0.0, max_leaf_abs=np.inf):
        """Grow ``subsets.shape[0]`` trees on one frozen stage.

        Returns ``(trees, pred_mean)`` with the group-mean leaf score per
        cell; the trees match what repeated :meth:`grow` calls would build.
        """
        cell_r = np.ascontiguousarray(cell_r, dtype=np.float64)
        cell_t = np.ascontiguousarray(cell_t, dtype=np.float64)
        if cell_r.shape != (self.n_cells,) or cell_t.shape != (self.n_cells,):
            raise ContractError("cell_r/cell_t must have one value per cell")
        if not np.all(cell_t >= 0) or float(np.sum(cell_t)) <= 0.0:
            raise DegenerateLeafError("total integral mass must be positive")
        subsets = np.ascontiguousarray(subsets, dtype=np.int32)
        if subsets.ndim != 3:
            raise ContractError("subsets must be (n_trees, max_nodes, n_sub)")
        if max_depth > 0 and subsets.shape[1] < self.max_nodes(max_depth):
            raise ContractError("subsets must cover every potential node slot")
        raw, pred_sum = kernels.grow_group(
            self._feat, self._vsorted, self._order, cell_r, cell_t, subsets,
            float(gamma), int(max_depth), float(min_gain),
            float(max_leaf_abs),
        )
        trees = [RegressionTree(*arrays) for arrays in raw]
        return trees, pred_sum / subsets.shape[0]


def grow_tree(stage: StageData, gamma, max_depth=6, feature_fraction=1.0,
              min_gain=0.0, rng_seed=None) -> RegressionTree:
    """Grow one tree on a stage with per-node feature subsampling."""
    grower = TreeGrower(stage.features)
    rng = np.random.default_rng(rng_seed)
    n_sub = max(1, math.ceil(feature_fraction * stage.p))
    subsets = grower.subsets(n_sub, max_depth, rng)
    tree, _ = grower.grow(stage.cell_r, stage.cell_t, gamma, max_depth, subsets,
                          min_gain)
    return tree


def predict_tree(tree: RegressionTree, z) -> float:
    """Route a covariate vector through the tree and return its leaf score."""
    return tree.predict(z)
