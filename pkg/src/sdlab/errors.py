"""Exception hierarchy shared by all laboratory modules."""


class LabError(Exception):
    """Base class for every error raised by sdlab."""


class ParameterError(LabError, ValueError):
    """A parameter lies outside its admissible range."""


class ConfigurationError(LabError, ValueError):
    """A configuration block is inconsistent (CFL, regularization, metadata)."""


class SingularityError(LabError, ArithmeticError):
    """Evaluation exactly at a drift singularity without regularization."""


class ResolutionError(LabError, ValueError):
    """A length scale is not resolved by the grid."""


class IterationError(LabError, RuntimeError):
    """An iterative method failed to converge.

    The last iterate is kept so callers can inspect or restart from it.
    """

    def __init__(self, message, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = list(history) if history is not None else []


class SolverError(IterationError):
    """A linear solve stagnated; carries the residual history."""
