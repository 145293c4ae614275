"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all mimoplace errors."""


class ZeroRange(ToolkitError):
    """Target sits at the array origin; bearing is undefined."""


class OutOfCoverage(ToolkitError):
    """Target range exceeds the configured maximum coverage."""


class ParseError(ToolkitError):
    """Scenario document is not valid JSON or a field is malformed."""


class SchemaError(ToolkitError):
    """Scenario document misses required keys or carries unknown ones."""


class DimensionMismatch(ToolkitError):
    """Measurement vector length disagrees with the scenario layout."""


class SingularRestriction(ToolkitError):
    """Restricted covariance factor is numerically singular."""


class CellGapError(ToolkitError):
    """Nonzero information block requested for non-adjacent cells."""


class SingularFim(ToolkitError):
    """Fisher information matrix is singular or too ill-conditioned to invert.

    Carries diagnostics: condition number estimate and the eigenvalue range.
    """

    def __init__(self, message, cond=None, eig_min=None, eig_max=None):
        super().__init__(message)
        self.cond = cond
        self.eig_min = eig_min
        self.eig_max = eig_max


class InfeasibleBounds(ToolkitError):
    """Pair distance bounds do not admit any geometry (d >= e)."""


class MaxIterations(ToolkitError):
    """Iterative solver hit its iteration budget before converging."""


class NumericalFailure(ToolkitError):
    """Iterative solver produced a non-finite or unusable iterate."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class RecoveryInfeasible(ToolkitError):
    """Geometry recovered from the relaxation could not be made feasible."""

    def __init__(self, message, max_violation=None):
        super().__init__(message)
        self.max_violation = max_violation


class LineSearchFailure(ToolkitError):
    """Local optimizer line search stalled; best iterate is attached."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class AllRestartsFailed(ToolkitError):
    """Every local solve in the multistart loop failed."""


class GridTooCoarse(ToolkitError):
    """Likelihood refinement moved further than one grid cell."""
