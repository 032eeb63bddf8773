"""Exception hierarchy shared across the package."""


class PPBoostError(Exception):
    """Base class for all ppboost errors."""


class DomainError(PPBoostError):
    """A location or distance falls outside the valid spatial domain."""


class ContractError(PPBoostError):
    """Arguments violate a documented precondition (shape, sign, count)."""


class DegenerateLeafError(ContractError):
    """A leaf has zero integral mass; the enclosing split is invalid."""


class SimulationError(PPBoostError):
    """A sampler could not produce a valid draw."""


class CalibrationError(PPBoostError):
    """Intensity calibration failed (zero or non-finite integral)."""


class EstimationError(PPBoostError):
    """A statistical estimator received insufficient data."""


class TrainingDivergedError(PPBoostError):
    """The boosted log-intensity left its admissible range during training."""


class MetricError(PPBoostError):
    """A metric was evaluated on invalid inputs."""


class EvaluationError(PPBoostError):
    """A cross-validation or benchmark evaluation could not be completed."""
