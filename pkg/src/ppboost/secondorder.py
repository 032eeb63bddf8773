"""Second-order summaries: K-function, pair correlations, spatial weights.

The scalar K statistic at distance m,

    K(m) = sum over ordered pairs of distinct events within distance m of
           1 / [lam(x1) lam(x2) |overlap(S, S shifted by x1-x2)|],

uses the translation edge correction: on a rectangle with sides (a, b) the
shifted-window overlap is (a - |dx|) (b - |dy|).  The clamped excess
max(K(m) - pi m^2, 0) measures clustering surplus over complete spatial
randomness and drives the spatial weights of the weighted likelihood: cells
where clustering inflates the variance of the fitted log-intensity get
down-weighted through

    w(s) = omega / (1 + exp(phi(s)) * excess),    integral w = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ContractError, DomainError, EstimationError
from .geometry import PointPattern, QuadratureGrid

__all__ = [
    "KEstimate",
    "k_hat",
    "PairCorrelation",
    "pair_correlation",
    "WeightField",
    "weight_field",
]


@dataclass(frozen=True)
class KEstimate:
    """K statistic at one distance, with the clamped excess over pi m^2."""

    m: float
    k_hat: float

    @property
    def pi_m2(self) -> float:
        return math.pi * self.m * self.m

    @property
    def excess(self) -> float:
        return max(self.k_hat - self.pi_m2, 0.0)


def k_hat(pattern: PointPattern, fitted_intensity_at_events, m: float) -> KEstimate:
    """Translation-corrected K statistic at distance m.

    ``fitted_intensity_at_events`` holds the fitted intensity at each event,
    in the pattern's point order.  Requires at least two events; callers
    that tolerate degenerate patterns should catch ``EstimationError`` and
    fall back to zero excess.
    """
    lam = np.asarray(fitted_intensity_at_events, dtype=np.float64).ravel()
    if lam.shape[0] != pattern.n:
        raise ContractError("one fitted intensity per event is required")
    if pattern.n < 2:
        raise EstimationError("K estimation needs at least two events")
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ContractError("fitted intensities must be finite and positive")
    a, b = pattern.window.side_lengths()
    if not 0 < m < min(a, b):
        raise DomainError(f"m must lie in (0, {min(a, b)})")
    total = kernels.k_pair_sum(
        np.ascontiguousarray(pattern.x),
        np.ascontiguousarray(pattern.y),
        np.ascontiguousarray(lam),
        float(m), a, b,
    )
    return KEstimate(m=float(m), k_hat=float(total))


def renormalize_for_k(fitted_intensity_at_events, window) -> np.ndarray:
    """Rescale fitted intensities so that sum(1/lam) equals the window area.

    For events drawn from intensity lam, E[sum 1/lam(x)] = |S|; enforcing
    the identity on the fitted values is the standard renormalisation of
    the inhomogeneous K estimator.  It also counteracts the in-sample
    inflation of a model evaluated on its own training events, which would
    otherwise bias the K statistic toward zero excess.
    """
    lam = np.asarray(fitted_intensity_at_events, dtype=np.float64)
    if lam.size == 0 or np.any(lam <= 0):
        raise ContractError("renormalisation needs positive intensities")
    scale = window.area() / float(np.sum(1.0 / lam))
    return lam / scale


@dataclass(frozen=True)
class PairCorrelation:
    """Closed-form pair correlation g(r) of the three generating processes."""

    process: str
    tau2: float = 0.0
    sigma: float = 0.0
    kappa: float = 0.0

    @classmethod
    def poisson(cls) -> "PairCorrelation":
        return cls("poisson")

    @classmethod
    def lgcp(cls, tau2: float, sigma: float) -> "PairCorrelation":
        return cls("lgcp", tau2=tau2, sigma=sigma)

    @classmethod
    def thomas(cls, kappa: float, sigma: float) -> "PairCorrelation":
        return cls("thomas", kappa=kappa, sigma=sigma)

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        if np.any(r < 0):
            raise ContractError("r must be nonnegative")
        if self.process == "poisson":
            g = np.ones_like(r)
        elif self.process == "lgcp":
            g = np.exp(self.tau2 * np.exp(-r / self.sigma))
        elif self.process == "thomas":
            g = 1.0 + np.exp(-(r * r) / (4.0 * self.sigma**2)) / (
                4.0 * math.pi * self.kappa * self.sigma**2
            )
        else:  # pragma: no cover - guarded by constructors
            raise ContractError(f"unknown process {self.process!r}")
        return float(g) if g.ndim == 0 else g


def pair_correlation(spec: PairCorrelation, r):
    return spec(r)


@dataclass(frozen=True)
class WeightField:
    """Per-cell weights with their normalizing scalar; integrates to one."""

    values: np.ndarray
    omega: float

    def at_cells(self, cell_index) -> np.ndarray:
        return self.values[np.asarray(cell_index, dtype=np.int64)]


def weight_field(phi, excess, grid: QuadratureGrid) -> WeightField:
    """Weights from the current log-intensity and the clamped K excess.

    raw(s) = 1 / (1 + exp(phi(s)) * excess); omega = 1 / integral raw;
    values = omega * raw.  Zero excess yields the uniform field 1/|S|.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (grid.n_cells,):
        raise ContractError("phi must hold one value per quadrature cell")
    if not np.all(np.isfinite(phi)):
        raise ContractError("phi must be finite")
    if isinstance(excess, KEstimate):
        excess = excess.excess
    if excess < 0:
        raise ContractError("excess must be nonnegative (clamped)")
    raw = 1.0 / (1.0 + np.exp(phi) * excess)
    omega = 1.0 / grid.integrate(raw)
    return WeightField(values=omega * raw, omega=float(omega))
