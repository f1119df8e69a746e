"""Exception types shared across the package."""


class FleetLqrError(Exception):
    """Base class for all package errors."""


class DimensionError(FleetLqrError):
    """Shape or length mismatch in a matrix operation."""


class DegenerateFactorizationError(FleetLqrError):
    """Rank-deficient input where a full-rank factorization is required."""


class ToleranceError(FleetLqrError):
    """An iterative search failed to reach its target tolerance."""


class InstabilityError(FleetLqrError):
    """Operation requires a Schur-stable matrix (spectral radius < 1)."""


class NonStabilizableError(FleetLqrError):
    """Riccati synthesis failed: iteration cap hit or gain does not stabilize."""


class ConvergenceError(FleetLqrError):
    """Fixed-point iteration exhausted its budget without converging."""


class FleetConstructionError(FleetLqrError):
    """Fleet builder could not produce a valid fleet (resampling exhausted)."""


class NumericBlowupError(FleetLqrError):
    """State became non-finite during simulation; distinct from an abort."""


class LedgerOrderError(FleetLqrError):
    """Regret samples must be appended with strictly increasing times."""


class ExcitationError(FleetLqrError):
    """Covariance too close to singular for the requested estimator."""

    def __init__(self, msg, agent=None):
        super().__init__(msg if agent is None else f"agent {agent}: {msg}")
        self.agent = agent


class DataBudgetError(FleetLqrError):
    """Trajectory too short for the requested split schedule."""


class SetupError(FleetLqrError):
    """Inconsistent run configuration (shapes, schedules)."""


class ConfigError(FleetLqrError):
    """Config file rejected; message names the offending line."""


class ExperimentError(FleetLqrError):
    """Experiment produced no usable result for some cell."""
