"""Exception hierarchy for dualreg.

Errors are grouped into three families so that batch front ends can map them
to distinct exit statuses: configuration problems, data problems, and
numerical failures raised while solving.
"""

from __future__ import annotations

__all__ = [
    "DualRegressionError",
    "ConfigError",
    "InvalidSpecError",
    "DataError",
    "DesignRankError",
    "NotJustIdentifiedError",
    "DomainError",
    "GridError",
    "NumericalError",
    "ScaleNotPositiveError",
    "InitializationError",
    "MaxIterationsError",
    "SingularJacobianError",
    "NonMonotoneMapError",
    "BracketError",
    "StudyAbortedError",
]


class DualRegressionError(Exception):
    """Base class for all dualreg errors."""


class ConfigError(DualRegressionError):
    """Invalid run configuration (bad option values, unknown names)."""


class InvalidSpecError(ConfigError):
    """Simulation design is internally inconsistent (e.g. scale can turn
    negative on the regressor support)."""


class DataError(DualRegressionError):
    """Input data violates the estimator's requirements."""


class DesignRankError(DataError):
    """Design matrix is numerically rank deficient."""


class NotJustIdentifiedError(DataError):
    """Direct instrumental estimation requires as many instrument columns
    as regressor columns."""


class DomainError(DualRegressionError):
    """Argument outside its mathematical domain (e.g. a probability level
    not strictly inside (0, 1))."""


class GridError(DualRegressionError):
    """A quantile-index grid is too sparse or too narrow for the requested
    rearrangement integral."""


class NumericalError(DualRegressionError):
    """Failure inside an iterative solver."""


class ScaleNotPositiveError(NumericalError):
    """The scale function is non-positive at some observation.

    Attributes
    ----------
    index : int
        Index of the first offending observation.
    """

    def __init__(self, index: int, message: str | None = None):
        self.index = int(index)
        super().__init__(message or f"scale is not positive at observation {index}")


class InitializationError(NumericalError):
    """No feasible starting point could be constructed (e.g. least-squares
    residuals are exactly zero, so no initial scale exists)."""


class MaxIterationsError(NumericalError):
    """Iteration limit reached before the convergence tolerances were met."""


class SingularJacobianError(NumericalError):
    """A linear system inside the solver is singular or numerically rank
    deficient."""


class NonMonotoneMapError(NumericalError):
    """The residual-to-outcome map is not strictly increasing where the
    solver needs to invert it.

    Attributes
    ----------
    index : int or None
        Offending observation, when known.
    """

    def __init__(self, message: str = "map is not strictly increasing", index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (observation {index})")


class BracketError(NumericalError):
    """No sign change found within the search bounds when inverting the
    residual-to-outcome map.

    Attributes
    ----------
    index : int or None
        Offending observation, when known.
    """

    def __init__(self, message: str = "no bracket found", index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (observation {index})")


class StudyAbortedError(NumericalError):
    """Too many replications of a simulation study failed."""
