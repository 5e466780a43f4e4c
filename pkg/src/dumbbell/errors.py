"""Exception hierarchy shared by all solver modules."""


class DumbbellError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(DumbbellError, ValueError):
    """Invalid parameters, shapes or configuration keys."""


class InputError(DumbbellError, ValueError):
    """Arguments that violate an operation's preconditions."""


class SolverError(DumbbellError, RuntimeError):
    """A linear solve did not reach its tolerance."""

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class StabilityError(SolverError):
    """A time step violates an explicit stability bound."""

    def __init__(self, message, advisory_dt=None, step=None):
        super().__init__(message, step=step)
        self.advisory_dt = advisory_dt


class OracleInvalidError(DumbbellError, RuntimeError):
    """The configuration-space grid oracle cannot represent the solution."""


class CheckpointError(DumbbellError, IOError):
    """Malformed or incompatible checkpoint file."""
