import numpy as np
import pytest

from ppboost.errors import ContractError, DomainError
from ppboost.geometry import (
    CovariateStack,
    PointPattern,
    QuadratureGrid,
    Window,
    covariate_at,
    quad_integrate,
)
from ppboost import io


class TestWindow:
    def test_area_and_sides(self):
        w = Window(0.0, 2.0, 1.0, 4.0)
        assert w.area() == 6.0
        assert w.side_lengths() == (2.0, 3.0)

    def test_degenerate_rejected(self):
        with pytest.raises(ContractError):
            Window(0.0, 0.0, 0.0, 1.0)
        with pytest.raises(ContractError):
            Window(0.0, 1.0, 2.0, 1.0)

    def test_contains_boundary_inclusive(self):
        w = Window.unit()
        assert w.contains(0.0, 0.0) and w.contains(1.0, 1.0)
        assert not w.contains(1.0000001, 0.5)


class TestPointPattern:
    def test_counts_and_columns(self):
        pat = PointPattern([[0.1, 0.2], [0.9, 0.8]], Window.unit())
        assert pat.n == 2
        assert np.allclose(pat.x, [0.1, 0.9])

    def test_empty(self):
        pat = PointPattern(np.empty((0, 2)), Window.unit())
        assert pat.n == 0

    def test_outside_window_rejected(self):
        with pytest.raises(DomainError):
            PointPattern([[1.5, 0.5]], Window.unit())


class TestQuadratureGrid:
    def test_volumes_tile_window(self):
        w = Window(0.3, 1.7, -1.0, 2.5)
        grid = QuadratureGrid(w, 37, 23)
        assert abs(grid.volumes.sum() - w.area()) <= 1e-12 * w.area()

    def test_centers_cover_cells(self):
        grid = QuadratureGrid(Window.unit(), 4, 4)
        assert grid.centers_x[0] == pytest.approx(0.125)
        assert grid.centers_y[0] == pytest.approx(0.125)
        assert grid.centers_x[5] == pytest.approx(0.375)
        assert grid.centers_y[5] == pytest.approx(0.375)

    def test_cell_index_matches_exhaustive_nearest_center(self):
        # floor-with-clamp lookup must agree with a brute-force scan over
        # all cell centers, including points sitting exactly on cell edges
        grid = QuadratureGrid(Window(0.0, 1.0, 0.0, 2.0), 7, 9)
        rng = np.random.default_rng(3)
        xs = np.concatenate([rng.uniform(0, 1, 200), [0.0, 1.0, 3 / 7, 2 / 7]])
        ys = np.concatenate([rng.uniform(0, 2, 200), [2.0, 0.0, 1.0, 2 / 9]])
        got = grid.cell_index(xs, ys)
        d2 = (xs[:, None] - grid.centers_x[None, :]) ** 2 + (
            ys[:, None] - grid.centers_y[None, :]
        ) ** 2
        expected = np.argmin(d2, axis=1)
        # on edges two centers tie at the minimum; accept either only if the
        # distance matches, otherwise require the exact argmin
        dist_got = d2[np.arange(len(xs)), got]
        dist_best = d2[np.arange(len(xs)), expected]
        assert np.allclose(dist_got, dist_best)

    def test_outside_lookup_rejected(self):
        grid = QuadratureGrid(Window.unit(), 4, 4)
        with pytest.raises(DomainError):
            grid.cell_index(1.2, 0.5)


class TestCovariateLookup:
    def test_constant_layer(self):
        stack = CovariateStack(Window.unit(), 8, 8,
                               np.full((1, 64), 3.25), ["c"])
        assert covariate_at(stack, 0.731, 0.118)[0] == 3.25

    def test_cell_center_returns_cell_value(self):
        rng = np.random.default_rng(0)
        stack = CovariateStack(Window.unit(), 5, 5, rng.normal(size=(2, 25)))
        grid = stack.grid()
        for idx in (0, 7, 24):
            z = covariate_at(stack, grid.centers_x[idx], grid.centers_y[idx])
            assert np.array_equal(z, stack.values[:, idx])

    def test_piecewise_constant_within_cell(self):
        rng = np.random.default_rng(1)
        stack = CovariateStack(Window.unit(), 4, 4, rng.normal(size=(3, 16)))
        a = stack.values_at(0.30, 0.30)
        b = stack.values_at(0.26, 0.49)  # same cell (0.25, 0.5) x (0.25, 0.5)
        assert np.array_equal(a, b)

    def test_missing_values_rejected(self):
        values = np.ones((1, 16))
        values[0, 3] = np.nan
        with pytest.raises(ContractError):
            CovariateStack(Window.unit(), 4, 4, values)


class TestQuadIntegrate:
    def test_constant_one_over_unit_window(self, unit_grid):
        assert quad_integrate(unit_grid, np.ones(unit_grid.n_cells)) == \
            pytest.approx(1.0, rel=1e-12)

    def test_zero(self, unit_grid):
        assert quad_integrate(unit_grid, np.zeros(unit_grid.n_cells)) == 0.0

    def test_linear_integrand_at_128(self):
        # integral of x over the unit square is 1/2; the midpoint rule is
        # exact for linear integrands so only rounding remains
        grid = QuadratureGrid(Window.unit(), 128, 128)
        val = quad_integrate(grid, grid.centers_x)
        assert abs(val - 0.5) < 1e-6

    def test_linearity(self, unit_grid, rng):
        h1 = rng.normal(size=unit_grid.n_cells)
        h2 = rng.normal(size=unit_grid.n_cells)
        a, b = 2.75, -1.3
        lhs = quad_integrate(unit_grid, a * h1 + b * h2)
        rhs = a * quad_integrate(unit_grid, h1) + b * quad_integrate(unit_grid, h2)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    def test_error_decreases_with_resolution(self):
        # smooth integrand: doubling the resolution cuts the error by 2x+
        exact = (np.e - 1.0) ** 2  # integral of exp(x+y) over the unit square
        errors = []
        for n in (16, 32, 64):
            grid = QuadratureGrid(Window.unit(), n, n)
            h = np.exp(grid.centers_x + grid.centers_y)
            errors.append(abs(quad_integrate(grid, h) - exact))
        assert errors[0] / errors[1] >= 2.0
        assert errors[1] / errors[2] >= 2.0

    def test_count_mismatch_rejected(self, unit_grid):
        with pytest.raises(ContractError):
            quad_integrate(unit_grid, np.ones(7))


class TestIO:
    def test_pattern_roundtrip(self, tmp_path):
        pat = PointPattern([[0.125, 0.25], [0.5, 0.75]], Window.unit())
        path = tmp_path / "pattern.csv"
        io.write_pattern_csv(pat, path)
        back = io.read_pattern_csv(path, Window.unit())
        assert np.allclose(back.points, pat.points)

    def test_empty_pattern_roundtrip(self, tmp_path):
        path = tmp_path / "empty.csv"
        io.write_pattern_csv(PointPattern(np.empty((0, 2)), Window.unit()), path)
        assert io.read_pattern_csv(path, Window.unit()).n == 0

    def test_covariates_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        stack = CovariateStack(Window(0, 2, 0, 1), 6, 3,
                               rng.normal(size=(2, 18)), ["alpha", "beta"])
        out = io.write_covariates(stack, tmp_path / "covs")
        back = io.read_covariates(out)
        assert back.names == ["alpha", "beta"]
        assert back.window == stack.window
        assert np.allclose(back.values, stack.values)

    def test_values_roundtrip(self, tmp_path):
        vals = np.random.default_rng(6).normal(size=48)
        path = tmp_path / "vals.csv"
        io.write_values_csv(vals, path)
        assert np.allclose(io.read_values_csv(path), vals)
