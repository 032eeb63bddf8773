import math

import numpy as np
import pytest

from ppboost.errors import ContractError, EvaluationError, MetricError
from ppboost.geometry import PointPattern, QuadratureGrid, Window
from ppboost.metrics import iae, kfold_eval
from ppboost.metrics import test_poisson_loglik as poisson_loglik
from ppboost.simulate import calibrated_model, sample_poisson
from ppboost.trainer import FitConfig
from conftest import make_stack


class TestLoglik:
    def test_empty_pattern_constant_intensity(self, unit_grid):
        lam = np.full(unit_grid.n_cells, 37.0)
        got = poisson_loglik(lam, np.empty(0), unit_grid, 1.0)
        assert got == pytest.approx(-37.0, rel=1e-12)

    def test_constant_400_hand_value(self, unit_grid):
        lam = np.full(unit_grid.n_cells, 400.0)
        lam_events = np.full(400, 400.0)
        got = poisson_loglik(lam, lam_events, unit_grid, 1.0)
        expected = 400 * math.log(400.0) - 400.0
        assert got == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1996.59, abs=0.01)

    def test_thinning_identity(self, unit_grid, rng):
        lam = rng.uniform(10, 100, unit_grid.n_cells)
        lam_events = rng.uniform(10, 100, 25)
        a = poisson_loglik(3.0 * lam, 3.0 * lam_events, unit_grid, 1 / 3)
        b = poisson_loglik(lam, lam_events, unit_grid, 1.0)
        assert a == pytest.approx(b, rel=1e-12)

    def test_invalid_inputs(self, unit_grid):
        lam = np.ones(unit_grid.n_cells)
        with pytest.raises(MetricError):
            poisson_loglik(lam, [0.0], unit_grid, 1.0)
        with pytest.raises(MetricError):
            poisson_loglik(lam, [1.0], unit_grid, 0.0)

    def test_truth_scores_best_on_average(self):
        # across replicates the true intensity beats any fixed perturbation
        stack = make_stack(n=12, seed=40)
        grid = stack.grid()
        model = calibrated_model("loglinear2", 0.8, stack, grid, 300.0)
        lam_true = model.intensity(stack)
        noise = np.random.default_rng(8).normal(size=grid.n_cells)
        lam_pert = lam_true * np.exp(0.3 * noise)
        diffs = []
        for s in range(40):
            pat = sample_poisson(lam_true, grid, seed=100 + s)
            cells = grid.cell_index(pat.x, pat.y)
            good = poisson_loglik(lam_true, lam_true[cells], grid)
            bad = poisson_loglik(lam_pert, lam_pert[cells], grid)
            diffs.append(good - bad)
        assert np.mean(diffs) > 0


class TestIae:
    def test_identical_fields_zero(self, unit_grid):
        lam = np.random.default_rng(0).uniform(1, 9, unit_grid.n_cells)
        assert iae(lam, lam, unit_grid) == 0.0

    def test_constant_offset(self, unit_grid):
        a = np.full(unit_grid.n_cells, 400.0)
        b = np.full(unit_grid.n_cells, 390.0)
        assert iae(a, b, unit_grid) == pytest.approx(10.0, rel=1e-12)

    def test_nonnegative_and_triangle(self, unit_grid, rng):
        a = rng.uniform(0, 10, unit_grid.n_cells)
        b = rng.uniform(0, 10, unit_grid.n_cells)
        c = rng.uniform(0, 10, unit_grid.n_cells)
        assert iae(a, b, unit_grid) >= 0
        assert iae(a, c, unit_grid) <= \
            iae(a, b, unit_grid) + iae(b, c, unit_grid) + 1e-12

    def test_grid_mismatch(self, unit_grid):
        with pytest.raises(ContractError):
            iae(np.ones(4), np.ones(4), unit_grid)


class TestKfold:
    def test_constant_fit_arithmetic_oracle(self):
        # 8 events, 4 folds of 2: every fold trains on 6 events, and with
        # constant covariates the fitted intensity is exactly 6/|S|;
        # total = sum_i [ n_i log(N_train_i / 3) - N_train_i / 3 ]
        stack = make_stack(constant=0.5)
        grid = stack.grid()
        rng = np.random.default_rng(3)
        pattern = PointPattern(rng.uniform(0, 1, size=(8, 2)), Window.unit())
        cfg = FitConfig(n_iterations=3, gamma=1.0, eta=0.5, rng_seed=0)
        got = kfold_eval(pattern, stack, grid, cfg, folds=4, rng_seed=7)
        expected = 4 * (2 * math.log(6.0 / 3.0) - 6.0 / 3.0)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_two_folds_use_factor_one(self):
        # folds=2: thin = 1/(2-1) = 1, so with 8 events the oracle value is
        # 2 * (4 log 4 - 4)
        stack = make_stack(constant=0.0)
        grid = stack.grid()
        rng = np.random.default_rng(4)
        pattern = PointPattern(rng.uniform(0, 1, size=(8, 2)), Window.unit())
        cfg = FitConfig(n_iterations=2, gamma=1.0, eta=0.5, rng_seed=0)
        got = kfold_eval(pattern, stack, grid, cfg, folds=2, rng_seed=9)
        expected = 2 * (4 * math.log(4.0) - 4.0)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_too_few_events(self):
        stack = make_stack()
        pattern = PointPattern([[0.5, 0.5], [0.2, 0.2]], Window.unit())
        with pytest.raises(EvaluationError):
            kfold_eval(pattern, stack, stack.grid(), FitConfig(), folds=4,
                       rng_seed=0)
