"""Synthetic covariate fields and point patterns.

Three generators cover the processes used throughout the package: an
inhomogeneous Poisson process, a log-Gaussian Cox process (Poisson process
with a log-normal random intensity), and a Thomas cluster process (Poisson
parents with Gaussian-dispersed offspring).  Covariate fields are zero-mean
Gaussian random fields with exponential covariance, drawn on the quadrature
grid by Cholesky factorization of the covariance matrix (adequate for
desk-scale grids; circulant embedding is the upgrade path for much finer
ones).

All samplers are deterministic given a seed.  ``seed`` arguments accept
anything ``numpy.random.default_rng`` does; samplers that need several
draws consume one shared stream in a documented order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationError, ContractError, SimulationError
from .geometry import CovariateStack, PointPattern, QuadratureGrid

__all__ = [
    "GrfSpec",
    "IntensityModel",
    "ClusterSpec",
    "sample_grf",
    "sample_covariates",
    "calibrate_alpha",
    "sample_poisson",
    "sample_lgcp",
    "sample_thomas",
]

# covariance exp(-10 r): the standard covariate field spec
COVARIATE_GRF_RATE = 10.0


@dataclass(frozen=True)
class GrfSpec:
    """Stationary isotropic exponential-covariance Gaussian field.

    covariance(r) = variance * exp(-r / scale)
    """

    variance: float
    scale: float

    def __post_init__(self):
        if self.variance < 0:
            raise ContractError("variance must be nonnegative")
        if self.scale <= 0:
            raise ContractError("scale must be strictly positive")

    @classmethod
    def from_rate(cls, rate: float, variance: float = 1.0) -> "GrfSpec":
        """Spec written as covariance exp(-rate * r)."""
        return cls(variance=variance, scale=1.0 / rate)


@dataclass(frozen=True)
class IntensityModel:
    """Log-linear or composite log-intensity over covariate layers.

    ``loglinear2``:  log lambda = log(alpha) + beta * (z1 + z2)
    ``complex10``:   log lambda = log(alpha) + beta * (z1 + z2*z3/2
                        + exp(z4)/6 + z5^2/2 + 3 sin(z6))
    """

    kind: str
    beta: float
    alpha: float = 1.0

    _KINDS = ("loglinear2", "complex10")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ContractError(f"unknown intensity kind {self.kind!r}")
        if self.alpha <= 0:
            raise ContractError("alpha must be strictly positive")

    @property
    def n_layers_used(self) -> int:
        return 2 if self.kind == "loglinear2" else 6

    def log_shape(self, stack: CovariateStack) -> np.ndarray:
        """beta-scaled covariate combination per cell, without log(alpha)."""
        z = stack.values
        if z.shape[0] < self.n_layers_used:
            raise ContractError(
                f"{self.kind} needs {self.n_layers_used} covariate layers"
            )
        if self.kind == "loglinear2":
            comb = z[0] + z[1]
        else:
            comb = (
                z[0]
                + 0.5 * z[1] * z[2]
                + np.exp(z[3]) / 6.0
                + 0.5 * z[4] ** 2
                + 3.0 * np.sin(z[5])
            )
        return self.beta * comb

    def log_intensity(self, stack: CovariateStack) -> np.ndarray:
        return np.log(self.alpha) + self.log_shape(stack)

    def intensity(self, stack: CovariateStack) -> np.ndarray:
        return np.exp(self.log_intensity(stack))


@dataclass(frozen=True)
class ClusterSpec:
    """Which process generates events on top of the deterministic intensity."""

    process: str  # poisson | lgcp | thomas
    tau2: float = 0.0
    sigma: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.process not in ("poisson", "lgcp", "thomas"):
            raise ContractError(f"unknown process {self.process!r}")
        if self.process == "lgcp" and (self.tau2 < 0 or self.sigma <= 0):
            raise ContractError("lgcp needs tau2 >= 0 and sigma > 0")
        if self.process == "thomas" and (self.kappa <= 0 or self.sigma <= 0):
            raise ContractError("thomas needs kappa > 0 and sigma > 0")


_chol_cache: dict[tuple, np.ndarray] = {}
_CHOL_CACHE_MAX = 4


def _grid_key(grid: QuadratureGrid) -> tuple:
    w = grid.window
    return (w.x_min, w.x_max, w.y_min, w.y_max, grid.nx, grid.ny)


def _cholesky_factor(spec: GrfSpec, grid: QuadratureGrid) -> np.ndarray:
    key = (_grid_key(grid), spec.variance, spec.scale)
    factor = _chol_cache.get(key)
    if factor is None:
        dx = grid.centers_x[:, None] - grid.centers_x[None, :]
        dy = grid.centers_y[:, None] - grid.centers_y[None, :]
        cov = spec.variance * np.exp(-np.hypot(dx, dy) / spec.scale)
        cov[np.diag_indices_from(cov)] += 1e-10
        try:
            factor = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SimulationError(
                "covariance matrix is not positive definite after jitter"
            ) from exc
        if len(_chol_cache) >= _CHOL_CACHE_MAX:
            _chol_cache.pop(next(iter(_chol_cache)))
        _chol_cache[key] = factor
    return factor


def sample_grf(spec: GrfSpec, grid: QuadratureGrid, seed=None) -> np.ndarray:
    """Draw a zero-mean field on the cell centers.

    A degenerate spec (variance 0) returns zeros without consuming any
    randomness, so downstream draws match the no-noise code path seed for
    seed.
    """
    if spec.variance == 0.0:
        return np.zeros(grid.n_cells)
    rng = np.random.default_rng(seed)
    factor = _cholesky_factor(spec, grid)
    return factor @ rng.standard_normal(grid.n_cells)


def bilinear_to_grid(knot_values, knot_grid: QuadratureGrid,
                     grid: QuadratureGrid) -> np.ndarray:
    """Bilinear interpolation from knot-cell centers to a finer grid.

    Locations beyond the outermost knot centers clamp to the border value.
    Both grids must share the window.
    """
    if knot_grid.window != grid.window:
        raise ContractError("knot grid and target grid must share the window")
    z = np.asarray(knot_values, dtype=np.float64).reshape(knot_grid.ny,
                                                          knot_grid.nx)

    def axis_weights(coords, knot_coords):
        step = knot_coords[1] - knot_coords[0] if knot_coords.size > 1 else 1.0
        lo = np.clip(np.searchsorted(knot_coords, coords) - 1, 0,
                     max(knot_coords.size - 2, 0))
        w = np.clip((coords - knot_coords[lo]) / step, 0.0, 1.0)
        return lo, w

    xs = grid.centers_x[: grid.nx]
    ys = grid.centers_y[:: grid.nx]
    kx = knot_grid.centers_x[: knot_grid.nx]
    ky = knot_grid.centers_y[:: knot_grid.nx]
    ix, wx = axis_weights(xs, kx)
    iy, wy = axis_weights(ys, ky)
    ix1 = np.minimum(ix + 1, knot_grid.nx - 1)
    iy1 = np.minimum(iy + 1, knot_grid.ny - 1)
    rows = z[:, ix] * (1.0 - wx) + z[:, ix1] * wx  # (ky, nx)
    out = rows[iy, :] * (1.0 - wy)[:, None] + rows[iy1, :] * wy[:, None]
    return out.ravel()


def sample_covariates(p: int, grid: QuadratureGrid, seed=None,
                      rate: float = COVARIATE_GRF_RATE,
                      knots: int | None = None) -> CovariateStack:
    """p independent unit-variance exponential-covariance fields.

    With ``knots`` set, each field is simulated on a ``knots x knots``
    lattice and bilinearly interpolated to the covariate grid; the
    interpolation smooths sub-knot variation the way raster pipelines
    built on coarse simulation lattices do.  ``None`` samples the field
    at the grid centers directly.
    """
    rng = np.random.default_rng(seed)
    spec = GrfSpec.from_rate(rate)
    if knots is None or knots >= min(grid.nx, grid.ny):
        layers = np.stack([sample_grf(spec, grid, rng) for _ in range(p)])
    else:
        knot_grid = QuadratureGrid(grid.window, knots, knots)
        layers = np.stack(
            [
                bilinear_to_grid(sample_grf(spec, knot_grid, rng), knot_grid,
                                 grid)
                for _ in range(p)
            ]
        )
    return CovariateStack(grid.window, grid.nx, grid.ny, layers)


def warm_grf_cache(grid: QuadratureGrid, specs=()) -> None:
    """Precompute Cholesky factors (e.g. before forking worker processes)."""
    _cholesky_factor(GrfSpec.from_rate(COVARIATE_GRF_RATE), grid)
    for spec in specs:
        if spec.variance > 0:
            _cholesky_factor(spec, grid)


def calibrate_alpha(model: IntensityModel, stack: CovariateStack,
                    grid: QuadratureGrid, target_count: float) -> float:
    """alpha making the model's intensity integrate to ``target_count``."""
    if target_count <= 0:
        raise CalibrationError("target count must be strictly positive")
    shape = np.exp(model.log_shape(stack))
    integral = grid.integrate(shape)
    if not np.isfinite(integral) or integral <= 0:
        raise CalibrationError(f"shape integral is {integral}")
    return float(target_count / integral)


def calibrated_model(kind: str, beta: float, stack: CovariateStack,
                     grid: QuadratureGrid, target_count: float) -> IntensityModel:
    model = IntensityModel(kind=kind, beta=beta)
    return replace(model, alpha=calibrate_alpha(model, stack, grid, target_count))


def sample_poisson(intensity, grid: QuadratureGrid, seed=None) -> PointPattern:
    """Poisson counts per cell with mean lambda(t_i)|T_i|, uniform placement.

    Within-cell positions are uniform; the pattern is a draw from the
    piecewise-constant intensity given by the cell values.
    """
    lam = np.asarray(intensity, dtype=np.float64)
    if lam.shape != (grid.n_cells,):
        raise ContractError("one intensity value per cell is required")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ContractError("intensity must be finite and nonnegative")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(lam * grid.volumes)
    total = int(counts.sum())
    if total == 0:
        return PointPattern(np.empty((0, 2)), grid.window)
    cells = np.repeat(np.arange(grid.n_cells), counts)
    dx, dy = grid.cell_sizes
    offsets = rng.random((total, 2)) - 0.5
    pts = np.column_stack(
        [
            grid.centers_x[cells] + offsets[:, 0] * dx,
            grid.centers_y[cells] + offsets[:, 1] * dy,
        ]
    )
    return PointPattern(pts, grid.window)


def sample_lgcp(model: IntensityModel, noise: GrfSpec, stack: CovariateStack,
                grid: QuadratureGrid, seed=None, return_intensity=False):
    """Draw from a log-Gaussian Cox process.

    One stream drives both stages: first the Gaussian field, then the
    Poisson draw given the realized intensity.  With ``noise.variance == 0``
    the field draw consumes nothing, making the output identical to
    ``sample_poisson`` of the deterministic intensity under the same seed.
    """
    rng = np.random.default_rng(seed)
    y = sample_grf(noise, grid, rng)
    lam = np.exp(model.log_intensity(stack) + y)
    pattern = sample_poisson(lam, grid, rng)
    if return_intensity:
        return pattern, lam
    return pattern


def sample_thomas(kappa: float, sigma: float, deterministic_intensity,
                  grid: QuadratureGrid, seed=None) -> PointPattern:
    """Thomas cluster process with overall intensity kappa * lambda_tilde.

    Parents are homogeneous Poisson(kappa) on the window dilated by
    4*sigma, so clusters centred just outside still contribute; each parent
    draws a Poisson(max lambda_tilde) number of Gaussian-displaced
    candidates which are thinned with retention lambda_tilde(s)/max and
    dropped when they fall outside the window.
    """
    if kappa <= 0 or sigma <= 0:
        raise ContractError("kappa and sigma must be strictly positive")
    lam_det = np.asarray(deterministic_intensity, dtype=np.float64)
    if lam_det.shape != (grid.n_cells,):
        raise ContractError("one deterministic intensity value per cell")
    if not np.all(np.isfinite(lam_det)) or np.any(lam_det < 0):
        raise ContractError("deterministic intensity must be finite, >= 0")
    lam_max = float(lam_det.max())
    window = grid.window
    if lam_max == 0.0:
        return PointPattern(np.empty((0, 2)), window)

    rng = np.random.default_rng(seed)
    dilated = window.dilated(4.0 * sigma)
    n_parents = rng.poisson(kappa * dilated.area())
    px = rng.uniform(dilated.x_min, dilated.x_max, n_parents)
    py = rng.uniform(dilated.y_min, dilated.y_max, n_parents)

    n_cand = rng.poisson(lam_max, n_parents)
    total = int(n_cand.sum())
    if total == 0:
        return PointPattern(np.empty((0, 2)), window)
    cx = np.repeat(px, n_cand) + rng.normal(0.0, sigma, total)
    cy = np.repeat(py, n_cand) + rng.normal(0.0, sigma, total)
    u = rng.random(total)

    inside = window.contains(cx, cy)
    keep = np.zeros(total, dtype=bool)
    if inside.any():
        idx = grid.cell_index(cx[inside], cy[inside])
        keep[inside] = u[inside] < lam_det[idx] / lam_max
    return PointPattern(np.column_stack([cx[keep], cy[keep]]), window)
