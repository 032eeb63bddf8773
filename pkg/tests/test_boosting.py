import numpy as np
import pytest

from ppboost.boosting import (
    RegressionTree,
    StageData,
    TreeGrower,
    best_split,
    grow_tree,
    leaf_loss,
    leaf_score,
    predict_tree,
)
from ppboost.errors import ContractError, DegenerateLeafError
from helpers import (
    golden_minimize,
    golden_minimize_batch,
    node_members,
    stage_loss_leaf,
    stage_loss_total,
)


def make_stage(n=256, p=3, seed=0, n_events=60):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, p))
    cell_weight = np.ones(n)
    exp_phi = np.exp(rng.normal(scale=0.3, size=n) + np.log(400.0))
    volumes = np.full(n, 1.0 / n)
    event_cells = rng.integers(0, n, n_events)
    event_weight = np.ones(n_events)
    return StageData(features, cell_weight, exp_phi, volumes, event_cells,
                     event_weight)


class TestLeafScore:
    def test_zero_numerator(self):
        assert leaf_score(1.5, 1.5, 0.7) == 0.0

    def test_hand_value_and_numeric_minimum(self):
        assert leaf_score(2.0, 1.0, 0.5) == pytest.approx(0.5, abs=1e-12)
        numeric = golden_minimize(2.0, 1.0, 0.5)
        assert abs(numeric - 0.5) < 1e-8

    def test_threshold_absorbs_gradient(self):
        assert leaf_score(1.0, 2.0, 3.0) == 0.0

    def test_degenerate_mass_rejected(self):
        with pytest.raises(DegenerateLeafError):
            leaf_score(1.0, 0.0, 0.5)

    def test_soft_threshold_monotone_in_gamma(self, rng):
        r = rng.uniform(0, 50, 200)
        t = rng.uniform(0.1, 40, 200)
        s1 = np.abs(leaf_score(r, t, 5.0))
        s2 = np.abs(leaf_score(r, t, 1.0))
        assert np.all(s1 <= s2 + 1e-15)

    def test_matches_golden_section_batch(self, rng):
        r = rng.uniform(0, 100, 500)
        t = rng.uniform(0.01, 100, 500)
        g = rng.uniform(0, 60, 500)
        closed = np.clip(leaf_score(r, t, g), -50.0, 50.0)
        numeric = golden_minimize_batch(r, t, g)
        assert np.max(np.abs(closed - numeric)) < 1e-8


class TestLeafLoss:
    def test_zero_score_is_zero(self):
        assert leaf_loss(3.0, 2.0, 0.0, 1.0) == 0.0

    def test_hand_arithmetic(self):
        # gamma|th| - R th + T(th + th^2/2) at (2, 1, 0.5, 0.5)
        assert leaf_loss(2.0, 1.0, 0.5, 0.5) == pytest.approx(-0.125)

    def test_closed_form_is_optimal(self, rng):
        r, t, g = 2.3, 0.9, 0.4
        best = leaf_loss(r, t, leaf_score(r, t, g), g)
        thetas = rng.uniform(-20, 20, 1000)
        assert np.all(best <= leaf_loss(r, t, thetas, g) + 1e-12)


class TestBestSplit:
    def test_no_distinct_values_returns_none(self):
        stage = make_stage()
        stage.features[:, :] = 1.0  # read-only? features copied in StageData
        stage_const = StageData(
            np.ones_like(stage.features), stage.cell_weight, stage.exp_phi,
            stage.volumes, stage.event_cells, stage.event_weight,
        )
        assert best_split(stage_const, [0, 1, 2], 0.0) is None

    def test_two_cell_hand_example(self):
        # cells at z=0 and z=1, all three events in the z=1 cell, gamma 0:
        # parent loss -2, children -0.25 and -6.25 -> split at 0.5, gain 4.5
        features = np.array([[0.0], [1.0]])
        stage = StageData(
            features,
            cell_weight=np.ones(2),
            exp_phi=np.ones(2),
            volumes=np.array([0.5, 0.5]),
            event_cells=np.array([1, 1, 1]),
            event_weight=np.ones(3),
        )
        split = best_split(stage, [0], 0.0)
        assert split is not None
        assert split.feature == 0
        assert split.threshold == pytest.approx(0.5)
        assert split.gain == pytest.approx(4.5, rel=1e-12)

    def test_gain_matches_from_scratch_loss(self, rng):
        stage = make_stage(seed=5)
        split = best_split(stage, [0, 1, 2], gamma=0.3)
        assert split is not None
        left = stage.features[:, split.feature] < split.threshold
        r_tot, t_tot = stage.cell_r.sum(), stage.cell_t.sum()
        parent = stage_loss_leaf(
            r_tot, t_tot,
            leaf_score(r_tot, t_tot, 0.3), 0.3,
        )
        pieces = 0.0
        for mask in (left, ~left):
            r, t = stage.cell_r[mask].sum(), stage.cell_t[mask].sum()
            pieces += stage_loss_leaf(r, t, leaf_score(r, t, 0.3), 0.3)
        assert split.gain == pytest.approx(parent - pieces, abs=1e-9)


class TestGrowTree:
    def test_max_depth_zero_single_leaf(self):
        stage = make_stage()
        tree = grow_tree(stage, gamma=0.1, max_depth=0)
        assert tree.n_nodes == 1
        expected = leaf_score(stage.cell_r.sum(), stage.cell_t.sum(), 0.1)
        assert tree.value[0] == pytest.approx(expected, rel=1e-12)

    def test_constant_covariates_single_leaf(self):
        stage = StageData(
            np.ones((64, 2)), np.ones(64), np.ones(64), np.full(64, 1 / 64),
            np.array([3, 9]), np.ones(2),
        )
        tree = grow_tree(stage, gamma=0.0, max_depth=4)
        assert tree.n_leaves == 1

    def test_deterministic_with_full_features(self):
        stage = make_stage(seed=9)
        t1 = grow_tree(stage, gamma=0.2, max_depth=4, feature_fraction=1.0)
        t2 = grow_tree(stage, gamma=0.2, max_depth=4, feature_fraction=1.0)
        assert t1.equals(t2)

    def test_root_split_agrees_with_best_split(self):
        stage = make_stage(seed=13)
        tree = grow_tree(stage, gamma=0.1, max_depth=1, feature_fraction=1.0)
        split = best_split(stage, range(stage.p), 0.1)
        assert tree.feature[0] == split.feature
        assert tree.threshold[0] == pytest.approx(split.threshold)
        assert tree.gain[0] == pytest.approx(split.gain, rel=1e-12)

    def test_gain_consistency_all_nodes(self):
        # every accepted split's stored gain equals the Eq-style loss
        # difference recomputed from routed stats
        for seed in range(4):
            stage = make_stage(seed=seed, n=200, n_events=80)
            gamma = [0.0, 0.5][seed % 2]
            tree = grow_tree(stage, gamma=gamma, max_depth=5,
                             feature_fraction=1.0)
            members = node_members(tree, stage.features)
            for nd in tree.internal_nodes():
                stats = {}
                for label, node in (("p", nd), ("l", int(tree.left[nd])),
                                    ("r", int(tree.right[nd]))):
                    cells = members[node]
                    r = stage.cell_r[cells].sum()
                    t = stage.cell_t[cells].sum()
                    stats[label] = stage_loss_leaf(
                        r, t, leaf_score(r, t, gamma), gamma)
                recomputed = stats["p"] - stats["l"] - stats["r"]
                assert tree.gain[nd] == pytest.approx(recomputed, abs=1e-9)

    def test_stage_loss_not_worse_than_zero_tree(self):
        for seed in range(3):
            stage = make_stage(seed=seed + 20)
            tree = grow_tree(stage, gamma=0.3, max_depth=6,
                             feature_fraction=1.0)
            total = stage_loss_total(tree, stage.features, stage.cell_r,
                                     stage.cell_t, 0.3, scores=tree.value)
            assert total <= 1e-12  # zero tree scores zero

    def test_leaf_cap_clamps_scores(self):
        stage = make_stage(seed=31, n_events=300)
        grower = TreeGrower(stage.features)
        subsets = grower.subsets(stage.p, 3, np.random.default_rng(0))
        tree, _ = grower.grow(stage.cell_r, stage.cell_t * 1e-4, 0.0, 3,
                              subsets, max_leaf_abs=2.0)
        assert np.max(np.abs(tree.value)) <= 2.0


class TestPredict:
    def test_single_leaf_constant(self):
        tree = RegressionTree([-1], [0.0], [-1], [-1], [3.7])
        assert predict_tree(tree, [0.0, 12.0]) == 3.7

    def test_depth_one_routing(self):
        tree = RegressionTree(
            feature=[0, -1, -1], threshold=[0.5, 0, 0],
            left=[1, -1, -1], right=[2, -1, -1], value=[0.0, -1.0, 2.0],
        )
        assert predict_tree(tree, [0.2, 9.9]) == -1.0
        assert predict_tree(tree, [0.7, 9.9]) == 2.0

    def test_tie_routes_right(self):
        tree = RegressionTree(
            feature=[0, -1, -1], threshold=[0.5, 0, 0],
            left=[1, -1, -1], right=[2, -1, -1], value=[0.0, -1.0, 2.0],
        )
        assert predict_tree(tree, [0.5]) == 2.0

    def test_predict_many_matches_scalar(self, rng):
        stage = make_stage(seed=17)
        tree = grow_tree(stage, gamma=0.05, max_depth=4, feature_fraction=1.0)
        z = rng.normal(size=(300, stage.p))
        batch = tree.predict_many(z)
        singles = np.array([tree.predict(row) for row in z])
        assert np.array_equal(batch, singles)

    def test_records_roundtrip(self):
        stage = make_stage(seed=23)
        tree = grow_tree(stage, gamma=0.1, max_depth=3, feature_fraction=1.0)
        back = RegressionTree.from_records(tree.to_records())
        z = np.random.default_rng(1).normal(size=(50, stage.p))
        assert np.array_equal(tree.predict_many(z), back.predict_many(z))


class TestStageData:
    def test_validation(self):
        with pytest.raises(ContractError):
            StageData(np.ones((4, 1)), np.zeros(4), np.ones(4),
                      np.ones(4), np.array([0]), np.ones(1))
        with pytest.raises(ContractError):
            StageData(np.ones((4, 1)), np.ones(4), np.ones(4),
                      np.ones(4), np.array([9]), np.ones(1))

    def test_cell_aggregates(self):
        stage = StageData(
            np.ones((3, 1)), np.array([1.0, 2.0, 1.0]), np.ones(3),
            np.full(3, 1 / 3), np.array([1, 1, 2]), np.array([0.5, 0.5, 2.0]),
        )
        assert np.allclose(stage.cell_r, [0.0, 1.0, 2.0])
        assert np.allclose(stage.cell_t, [1 / 3, 2 / 3, 1 / 3])
