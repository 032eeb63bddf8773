"""Additive training, losses, prediction and cross-validated selection.

The model is an intercept plus K groups of trees: the log-intensity at a
location s with covariates z(s) is

    phi(s) = log(N/|S|) + eta * sum_k mean_j tree_kj(z(s)),

each group holding ``parallel_trees`` trees grown on the same frozen stage
with independent per-node feature subsamples (a boosted random forest).
Each stage minimizes the penalized quadratic approximation of the (possibly
weighted) Poisson likelihood loss around the current fit.

Two losses are supported.  ``poisson`` is the penalized negative Poisson
log-likelihood; it treats every location equally.  ``weighted_poisson``
multiplies both the event sum and the intensity integral by a spatial
weight field that discounts regions where clustering makes the fit noisy;
the field is recomputed every iteration from the current log-intensity and
a clustering excess held fixed across iterations.  The excess comes from a
plain-Poisson prefit: fit, evaluate the fitted intensity at the events,
estimate the K statistic, clamp.

Hyperparameters (iteration count, penalty, learning rate) are selected by
two-fold cross-validation repeated three times: each half trains a model
whose held-out Poisson log-likelihood is recorded after every iteration
(training on half the events estimates half the intensity, and the held
out half *is* a half-intensity process, so the score needs no thinning
factor); fold scores are summed per repeat, averaged across repeats, and
the best (k, gamma, eta) wins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .boosting import RegressionTree, TreeGrower
from .errors import (
    ContractError,
    DomainError,
    EstimationError,
    TrainingDivergedError,
)
from .geometry import CovariateStack, PointPattern, QuadratureGrid
from .io import window_from_dict, window_to_dict
from .secondorder import k_hat, renormalize_for_k, weight_field

__all__ = [
    "FitConfig",
    "Ensemble",
    "CvGrid",
    "CvReport",
    "fit",
    "loss_poisson",
    "loss_weighted",
    "predict_log_intensity",
    "cv_select",
    "weights_stage",
]

MODEL_FORMAT = "ppboost-ensemble"
MODEL_VERSION = 1


@dataclass(frozen=True)
class FitConfig:
    loss: str = "poisson"  # poisson | weighted_poisson
    n_iterations: int = 100
    gamma: float = 10.0
    eta: float = 0.1
    m: float | None = None  # K-function distance (weighted loss)
    parallel_trees: int = 10
    feature_fraction: float = 1.0 / 3.0
    max_depth: int = 6
    min_gain: float = 0.0
    rng_seed: int | None = None
    fixed_excess: float | None = None  # bypasses the prefit + K pipeline
    max_leaf_step: float = 10.0  # clamp on stored leaf scores
    max_abs_log_intensity: float = 50.0

    def __post_init__(self):
        if self.loss not in ("poisson", "weighted_poisson"):
            raise ContractError(f"unknown loss {self.loss!r}")
        if self.n_iterations < 1:
            raise ContractError("n_iterations must be >= 1")
        if not 0 < self.eta <= 1:
            raise ContractError("eta must lie in (0, 1]")
        if self.gamma < 0:
            raise ContractError("gamma must be nonnegative")
        if self.parallel_trees < 1:
            raise ContractError("parallel_trees must be >= 1")
        if not 0 < self.feature_fraction <= 1:
            raise ContractError("feature_fraction must lie in (0, 1]")
        if self.loss == "weighted_poisson" and self.fixed_excess is None \
                and (self.m is None or self.m <= 0):
            raise ContractError("weighted loss needs a positive distance m")


class Ensemble:
    """Fitted additive model: intercept + eta-scaled tree-group averages."""

    def __init__(self, intercept: float, groups, eta: float,
                 parallel_trees: int, window=None, feature_names=None,
                 config: FitConfig | None = None, excess: float | None = None):
        self.intercept = float(intercept)
        self.groups = [list(g) for g in groups]
        self.eta = float(eta)
        self.parallel_trees = int(parallel_trees)
        self.window = window
        self.feature_names = list(feature_names) if feature_names else None
        self.config = config
        self.excess = excess

    @property
    def n_iterations(self) -> int:
        return len(self.groups)

    def trees(self):
        for group in self.groups:
            yield from group

    def predict_features(self, features) -> np.ndarray:
        """Log-intensity for rows of a (n, p) covariate matrix."""
        features = np.ascontiguousarray(features, dtype=np.float64)
        out = np.full(features.shape[0], self.intercept)
        for group in self.groups:
            acc = np.zeros(features.shape[0])
            for tree in group:
                acc += tree.predict_many(features)
            out += self.eta * acc / len(group)
        return out

    def penalty(self, gamma: float) -> float:
        """L1 penalty of the model's additive components.

        The k-th component the model actually adds is
        eta * mean_j tree_kj, so each stored leaf score enters scaled by
        eta / group size; with that accounting (and a convexity argument)
        every accepted boosting stage decreases the penalized loss at the
        quadratic level.
        """
        total = 0.0
        for group in self.groups:
            scale = self.eta / len(group)
            total += scale * sum(
                float(np.sum(np.abs(t.leaf_values()))) for t in group
            )
        return gamma * total

    def to_json_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "intercept": self.intercept,
            "eta": self.eta,
            "parallel_trees": self.parallel_trees,
            "excess": self.excess,
            "window": window_to_dict(self.window) if self.window else None,
            "feature_names": self.feature_names,
            "groups": [[t.to_records() for t in g] for g in self.groups],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def from_json_dict(cls, data: dict) -> "Ensemble":
        if data.get("format") != MODEL_FORMAT:
            raise ContractError("not a ppboost ensemble file")
        if data.get("version") != MODEL_VERSION:
            raise ContractError(f"unsupported model version {data.get('version')}")
        groups = [
            [RegressionTree.from_records(rec) for rec in group]
            for group in data["groups"]
        ]
        window = window_from_dict(data["window"]) if data.get("window") else None
        return cls(
            intercept=data["intercept"],
            groups=groups,
            eta=data["eta"],
            parallel_trees=data["parallel_trees"],
            window=window,
            feature_names=data.get("feature_names"),
            excess=data.get("excess"),
        )

    @classmethod
    def load(cls, path) -> "Ensemble":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _as_seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _event_cells(pattern: PointPattern, grid: QuadratureGrid) -> np.ndarray:
    if pattern.n == 0:
        return np.empty(0, dtype=np.int64)
    return grid.cell_index(pattern.x, pattern.y)


def features_on_grid(stack: CovariateStack, grid: QuadratureGrid) -> np.ndarray:
    """Covariate matrix at the quadrature cell centers.

    When the quadrature grid matches the covariate raster this is the
    raster itself; a finer independent quadrature looks the covariates up
    nearest-cell at its own centers.
    """
    if stack.window != grid.window:
        raise ContractError("covariate stack and quadrature grid disagree "
                            "on the window")
    if (stack.nx, stack.ny) == (grid.nx, grid.ny):
        return stack.features
    return stack.values_at(grid.centers_x, grid.centers_y)


class _BoostState:
    """One additive training run over a fixed pattern/grid/covariates."""

    def __init__(self, features, grid: QuadratureGrid, event_cells,
                 n_events: int, config: FitConfig, excess: float,
                 seed_seq: np.random.SeedSequence):
        self.grower = TreeGrower(features)
        self.grid = grid
        self.volumes = grid.volumes
        self.counts = np.bincount(event_cells, minlength=grid.n_cells).astype(
            np.float64
        )
        self.n_events = n_events
        self.config = config
        self.excess = float(excess)
        self.weighted = config.loss == "weighted_poisson"
        self.rng = np.random.default_rng(seed_seq)
        self.intercept = math.log(n_events / grid.window.area())
        self.phi = np.full(grid.n_cells, self.intercept)
        self.groups: list[list[RegressionTree]] = []
        self.n_sub = max(1, math.ceil(config.feature_fraction * self.grower.p))

    def run(self, n_iterations: int, test_counts=None):
        """Boost for ``n_iterations``; optionally record the held-out
        Poisson log-likelihood after every iteration against test event
        counts per cell."""
        cfg = self.config
        curve = np.empty(n_iterations) if test_counts is not None else None
        for k in range(n_iterations):
            exp_phi = np.exp(self.phi)
            if self.weighted and self.excess > 0.0:
                raw = 1.0 / (1.0 + exp_phi * self.excess)
                omega = 1.0 / float(raw @ self.volumes)
                w = omega * raw
                cell_r = w * self.counts
                cell_t = w * exp_phi * self.volumes
            elif self.weighted:
                omega = 1.0 / self.grid.window.area()
                cell_r = omega * self.counts
                cell_t = omega * exp_phi * self.volumes
            else:
                cell_r = self.counts
                cell_t = exp_phi * self.volumes

            subsets = np.stack(
                [
                    self.grower.subsets(self.n_sub, cfg.max_depth, self.rng)
                    for _ in range(cfg.parallel_trees)
                ]
            )
            trees, pred_mean = self.grower.grow_group(
                cell_r, cell_t, cfg.gamma, cfg.max_depth, subsets,
                cfg.min_gain, cfg.max_leaf_step
            )
            self.groups.append(trees)
            self.phi = self.phi + cfg.eta * pred_mean
            peak = np.max(np.abs(self.phi))
            if not np.isfinite(peak) or peak > cfg.max_abs_log_intensity:
                raise TrainingDivergedError(
                    f"log-intensity left +-{cfg.max_abs_log_intensity} at "
                    f"iteration {k + 1}; lower eta or raise gamma"
                )
            if curve is not None:
                curve[k] = self._test_loglik(test_counts)
        return curve

    def _test_loglik(self, test_counts) -> float:
        exp_phi = np.exp(self.phi)
        return float(test_counts @ self.phi - exp_phi @ self.volumes)

    def ensemble(self, stack: CovariateStack) -> Ensemble:
        return Ensemble(
            intercept=self.intercept,
            groups=self.groups,
            eta=self.config.eta,
            parallel_trees=self.config.parallel_trees,
            window=self.grid.window,
            feature_names=stack.names,
            config=self.config,
            excess=self.excess if self.weighted else None,
        )


def _resolve_excess(pattern, stack, grid, config: FitConfig,
                    seed_seq: np.random.SeedSequence) -> float:
    """Excess for the weighted pipeline: Poisson prefit, then K at m."""
    if config.fixed_excess is not None:
        if config.fixed_excess < 0:
            raise ContractError("fixed_excess must be nonnegative")
        return float(config.fixed_excess)
    prefit_cfg = replace(config, loss="poisson", fixed_excess=None)
    prefit_seed = np.random.SeedSequence(
        entropy=seed_seq.entropy, spawn_key=(*seed_seq.spawn_key, 101)
    )
    prefit = _fit_with_seed(pattern, stack, grid, prefit_cfg, prefit_seed)
    lam_events = np.exp(
        prefit.predict_features(stack.values_at(pattern.x, pattern.y))
    )
    try:
        lam_events = renormalize_for_k(lam_events, grid.window)
        estimate = k_hat(pattern, lam_events, config.m)
    except EstimationError:
        return 0.0
    return estimate.excess


def _fit_with_seed(pattern, stack, grid, config, seed_seq) -> Ensemble:
    event_cells = _event_cells(pattern, grid)
    excess = 0.0
    if config.loss == "weighted_poisson":
        excess = _resolve_excess(pattern, stack, grid, config, seed_seq)
    state = _BoostState(features_on_grid(stack, grid), grid, event_cells,
                        pattern.n, config, excess, seed_seq)
    state.run(config.n_iterations)
    return state.ensemble(stack)


def fit(pattern: PointPattern, stack: CovariateStack, grid: QuadratureGrid,
        config: FitConfig) -> Ensemble:
    """Train an ensemble on a point pattern.

    The intercept is the homogeneous maximum-likelihood rate log(N/|S|), so
    the trees model pure covariate effects.  For the weighted loss the
    clustering excess is fixed up front (see ``_resolve_excess``) and only
    the weight field is refreshed each iteration.
    """
    if pattern.n == 0:
        raise ContractError("cannot fit an empty point pattern")
    return _fit_with_seed(pattern, stack, grid, config,
                          _as_seed_seq(config.rng_seed))


def weights_stage(phi, excess, grid: QuadratureGrid):
    """Weight field for one iteration (delegates to the second-order module)."""
    return weight_field(phi, excess, grid)


def predict_log_intensity(ensemble: Ensemble, stack: CovariateStack,
                          locations=None) -> np.ndarray:
    """Log-intensity at locations (default: every quadrature cell center)."""
    if locations is None:
        return ensemble.predict_features(stack.features)
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    inside = stack.window.contains(locations[:, 0], locations[:, 1])
    if not np.all(inside):
        raise DomainError("prediction location outside the window")
    return ensemble.predict_features(
        stack.values_at(locations[:, 0], locations[:, 1])
    )


def _phi_terms(ensemble, pattern, stack, grid):
    phi_cells = ensemble.predict_features(features_on_grid(stack, grid))
    phi_events = (
        ensemble.predict_features(stack.values_at(pattern.x, pattern.y))
        if pattern.n
        else np.empty(0)
    )
    return phi_cells, phi_events


def loss_poisson(ensemble: Ensemble, pattern: PointPattern,
                 stack: CovariateStack, grid: QuadratureGrid,
                 gamma: float) -> float:
    """Penalized negative Poisson log-likelihood of the fitted ensemble."""
    phi_cells, phi_events = _phi_terms(ensemble, pattern, stack, grid)
    integral = grid.integrate(np.exp(phi_cells))
    return ensemble.penalty(gamma) - float(phi_events.sum()) + integral


def loss_weighted(ensemble: Ensemble, pattern: PointPattern,
                  stack: CovariateStack, grid: QuadratureGrid,
                  weights, gamma: float) -> float:
    """Weighted variant: event and integral terms carry spatial weights."""
    phi_cells, phi_events = _phi_terms(ensemble, pattern, stack, grid)
    w_cells = weights.values
    w_events = weights.at_cells(_event_cells(pattern, grid))
    integral = grid.integrate(w_cells * np.exp(phi_cells))
    return ensemble.penalty(gamma) - float(w_events @ phi_events) + integral


@dataclass(frozen=True)
class CvGrid:
    """Candidate sets for cross-validated selection."""

    k_max: int = 200
    gammas: tuple = (10.0, 30.0, 50.0)
    etas: tuple = (0.1, 0.05)

    def __post_init__(self):
        if self.k_max < 1 or not self.gammas or not self.etas:
            raise ContractError("empty cross-validation grid")


@dataclass
class CvReport:
    """Averaged test log-likelihood curves and the selected triple."""

    curves: dict  # (gamma, eta) -> ndarray of length k_max
    k: int
    gamma: float
    eta: float
    score: float
    n_repeats: int = 3

    def selected_config(self, base: FitConfig) -> FitConfig:
        return replace(base, n_iterations=self.k, gamma=self.gamma,
                       eta=self.eta)

    def to_json_dict(self) -> dict:
        return {
            "selected": {"K": self.k, "gamma": self.gamma, "eta": self.eta,
                         "score": self.score},
            "n_repeats": self.n_repeats,
            "curves": [
                {"gamma": g, "eta": e, "test_loglik": list(curve)}
                for (g, e), curve in self.curves.items()
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)


def cv_select(pattern: PointPattern, stack: CovariateStack,
              grid: QuadratureGrid, base_config: FitConfig,
              cv_grid: CvGrid = CvGrid(), rng_seed=None) -> CvReport:
    """Two-fold cross-validation repeated three times.

    Events are split in half at random; each half trains to ``k_max``
    iterations under every (gamma, eta) while the other half's Poisson
    log-likelihood is recorded per iteration.  Fold scores are summed per
    repeat and averaged over the three repeats; the maximizing (k, gamma,
    eta) is returned, ties resolved to the smallest k, then the largest
    gamma, then the smallest eta.  A diverging fold invalidates its
    (gamma, eta) combination.
    """
    if pattern.n < 4:
        raise ContractError("cross-validation needs at least 4 events")
    n_repeats = 3
    ss = _as_seed_seq(rng_seed)
    split_seeds = ss.spawn(n_repeats)
    fit_seed_root = ss.spawn(1)[0]

    event_cells = _event_cells(pattern, grid)
    combos = [(float(g), float(e)) for g in cv_grid.gammas for e in cv_grid.etas]
    sums = {c: np.zeros(cv_grid.k_max) for c in combos}
    bad = set()

    excess_by_fold = {}
    fold_members = []
    for rep in range(n_repeats):
        rng = np.random.default_rng(split_seeds[rep])
        perm = rng.permutation(pattern.n)
        half = pattern.n // 2
        fold_members.append((perm[:half], perm[half:]))

    fit_counter = 0
    for rep in range(n_repeats):
        for fold in range(2):
            train_idx, test_idx = fold_members[rep]
            if fold == 1:
                train_idx, test_idx = test_idx, train_idx
            if train_idx.size == 0 or test_idx.size == 0:
                raise ContractError("degenerate cross-validation split")
            train_cells = event_cells[train_idx]
            test_counts = np.bincount(
                event_cells[test_idx], minlength=grid.n_cells
            ).astype(np.float64)

            fold_excess = None
            if base_config.loss == "weighted_poisson" \
                    and base_config.fixed_excess is None:
                fold_excess = excess_by_fold.get((rep, fold))

            for combo in combos:
                if combo in bad:
                    continue
                gamma_c, eta_c = combo
                cfg = replace(base_config, gamma=gamma_c, eta=eta_c,
                              n_iterations=cv_grid.k_max)
                seed = np.random.SeedSequence(
                    entropy=fit_seed_root.entropy,
                    spawn_key=(*fit_seed_root.spawn_key, fit_counter),
                )
                fit_counter += 1
                try:
                    excess = 0.0
                    if cfg.loss == "weighted_poisson":
                        if cfg.fixed_excess is not None:
                            excess = cfg.fixed_excess
                        else:
                            if fold_excess is None:
                                fold_excess = _resolve_excess(
                                    pattern.subset(train_idx), stack, grid,
                                    cfg, seed,
                                )
                                excess_by_fold[(rep, fold)] = fold_excess
                            excess = fold_excess
                    state = _BoostState(features_on_grid(stack, grid),
                                        grid, train_cells, train_idx.size,
                                        cfg, excess, seed)
                    curve = state.run(cv_grid.k_max, test_counts=test_counts)
                except TrainingDivergedError:
                    bad.add(combo)
                    continue
                sums[combo] += curve

    best = None
    for combo in combos:
        if combo in bad:
            continue
        avg = sums[combo] / n_repeats
        for k in range(cv_grid.k_max):
            key = (avg[k], -(k + 1), combo[0], -combo[1])
            if best is None or key > best[0]:
                best = (key, k + 1, combo, avg[k])
    if best is None:
        raise TrainingDivergedError("every (gamma, eta) combination diverged")

    curves = {c: sums[c] / n_repeats for c in combos if c not in bad}
    _, k_sel, (g_sel, e_sel), score = best
    return CvReport(curves=curves, k=k_sel, gamma=g_sel, eta=e_sel,
                    score=float(score), n_repeats=n_repeats)
