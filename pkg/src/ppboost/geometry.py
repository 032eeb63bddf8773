"""Rectangular windows, point patterns, covariate rasters and quadrature.

Every spatial integral in the package is discretized on a regular grid of
cells covering the observation window; covariates are rasters on the same
kind of grid and are looked up piecewise-constant (nearest cell).  Cell
values are stored flat in row-major order: the y index is the outer loop,
the x index the inner one, so ``flat = iy * nx + ix``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError

__all__ = [
    "Window",
    "PointPattern",
    "CovariateStack",
    "QuadratureGrid",
    "covariate_at",
    "quad_integrate",
]


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangular observation window."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ContractError(
                f"degenerate window [{self.x_min}, {self.x_max}] x "
                f"[{self.y_min}, {self.y_max}]"
            )

    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def side_lengths(self) -> tuple[float, float]:
        return (self.x_max - self.x_min, self.y_max - self.y_min)

    def contains(self, x, y):
        """Boundary-inclusive membership test; works on scalars or arrays."""
        return (
            (x >= self.x_min)
            & (x <= self.x_max)
            & (y >= self.y_min)
            & (y <= self.y_max)
        )

    def dilated(self, margin: float) -> "Window":
        return Window(
            self.x_min - margin,
            self.x_max + margin,
            self.y_min - margin,
            self.y_max + margin,
        )

    @classmethod
    def unit(cls) -> "Window":
        return cls(0.0, 1.0, 0.0, 1.0)


def _cell_indices(window: Window, nx: int, ny: int, x, y):
    """Map locations to (ix, iy) cell indices.

    The cell is found by flooring the scaled coordinate; locations on the
    top/right boundary are clamped to the last cell so the whole closed
    window is covered.
    """
    wx, wy = window.side_lengths()
    ix = np.floor((np.asarray(x) - window.x_min) * (nx / wx)).astype(np.int64)
    iy = np.floor((np.asarray(y) - window.y_min) * (ny / wy)).astype(np.int64)
    return np.clip(ix, 0, nx - 1), np.clip(iy, 0, ny - 1)


@dataclass(frozen=True)
class PointPattern:
    """Event locations inside a rectangular window."""

    points: np.ndarray  # (n, 2) float64
    window: Window

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ContractError(f"points must have shape (n, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContractError("point coordinates must be finite")
        inside = self.window.contains(pts[:, 0], pts[:, 1])
        if not np.all(inside):
            bad = pts[~inside][0]
            raise DomainError(f"event {tuple(bad)} lies outside the window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def subset(self, mask_or_index) -> "PointPattern":
        return PointPattern(self.points[mask_or_index], self.window)


@dataclass(frozen=True)
class QuadratureGrid:
    """Regular cell decomposition used to approximate spatial integrals.

    ``integrate(h) = sum_i h(t_i) |T_i|`` with ``t_i`` the cell centers and
    ``|T_i|`` the cell areas.  The cells tile the window exactly, so the
    volumes sum to the window area up to floating-point rounding.
    """

    window: Window
    nx: int
    ny: int
    centers_x: np.ndarray = field(init=False, repr=False)
    centers_y: np.ndarray = field(init=False, repr=False)
    volumes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ContractError("grid must have at least one cell per axis")
        wx, wy = self.window.side_lengths()
        dx, dy = wx / self.nx, wy / self.ny
        xs = self.window.x_min + (np.arange(self.nx) + 0.5) * dx
        ys = self.window.y_min + (np.arange(self.ny) + 0.5) * dy
        cx, cy = np.meshgrid(xs, ys)  # y outer, x inner
        vols = np.full(self.nx * self.ny, dx * dy)
        for name, arr in (
            ("centers_x", cx.ravel()),
            ("centers_y", cy.ravel()),
            ("volumes", vols),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_sizes(self) -> tuple[float, float]:
        wx, wy = self.window.side_lengths()
        return wx / self.nx, wy / self.ny

    @classmethod
    def from_stack(cls, stack: "CovariateStack") -> "QuadratureGrid":
        return cls(stack.window, stack.nx, stack.ny)

    def cell_index(self, x, y):
        """Flat cell index of locations inside the window."""
        inside = self.window.contains(x, y)
        if not np.all(inside):
            raise DomainError("location outside the window")
        ix, iy = _cell_indices(self.window, self.nx, self.ny, x, y)
        return iy * self.nx + ix

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_cells,):
            raise ContractError(
                f"expected {self.n_cells} cell values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ContractError("cell values must be finite")
        return float(values @ self.volumes)


class CovariateStack:
    """p covariate rasters on one regular grid covering the window.

    Parameters
    ----------
    window : Window
    nx, ny : int
        Grid resolution (x and y cell counts).
    values : array_like, shape (p, nx * ny) or (p, ny, nx)
        One finite value per cell per layer, row-major (y outer, x inner).
    names : sequence of str, optional
        Layer labels; defaults to ``z1 .. zp``.
    """

    def __init__(self, window: Window, nx: int, ny: int, values, names=None):
        vals = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
        if vals.ndim == 3:
            if vals.shape[1:] != (ny, nx):
                raise ContractError(
                    f"layer shape {vals.shape[1:]} does not match ({ny}, {nx})"
                )
            vals = vals.reshape(vals.shape[0], ny * nx)
        if vals.ndim != 2 or vals.shape[1] != nx * ny:
            raise ContractError(
                f"expected (p, {nx * ny}) covariate values, got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ContractError("covariate layers must not contain missing values")
        if names is None:
            names = [f"z{i + 1}" for i in range(vals.shape[0])]
        names = [str(s) for s in names]
        if len(names) != vals.shape[0]:
            raise ContractError("one name per layer is required")
        vals.setflags(write=False)
        self.window = window
        self.nx = int(nx)
        self.ny = int(ny)
        self.values = vals
        self.names = names

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def features(self) -> np.ndarray:
        """Cell-major feature matrix of shape (n_cells, p)."""
        feats = np.ascontiguousarray(self.values.T)
        feats.setflags(write=False)
        return feats

    def grid(self) -> QuadratureGrid:
        return QuadratureGrid(self.window, self.nx, self.ny)

    def layer(self, name_or_index) -> np.ndarray:
        if isinstance(name_or_index, str):
            name_or_index = self.names.index(name_or_index)
        return self.values[name_or_index]

    def cell_index(self, x, y):
        inside = self.window.contains(x, y)
        if not np.all(inside):
            raise DomainError("location outside the window")
        ix, iy = _cell_indices(self.window, self.nx, self.ny, x, y)
        return iy * self.nx + ix

    def values_at(self, x, y) -> np.ndarray:
        """Nearest-cell covariate vectors at locations, shape (n, p)."""
        idx = self.cell_index(np.atleast_1d(x), np.atleast_1d(y))
        return self.values[:, idx].T


def covariate_at(stack: CovariateStack, x: float, y: float) -> np.ndarray:
    """Covariate vector (length p) of the cell containing ``(x, y)``."""
    return stack.values_at(x, y)[0]


def quad_integrate(grid: QuadratureGrid, values) -> float:
    """Approximate ``integral h`` by ``sum_i h(t_i) |T_i|`` over the grid."""
    return grid.integrate(values)
