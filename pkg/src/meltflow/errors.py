"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all meltflow errors."""


class DimensionError(ToolkitError):
    """Shapes or lengths of operands do not satisfy an operation's contract."""


class ParameterError(ToolkitError):
    """An argument or configuration value is outside its permitted domain."""


class NumericsError(ToolkitError):
    """A forward computation produced NaN or infinity from finite inputs."""


class DataError(ToolkitError):
    """Input data violates the expected schema or cannot be parsed."""


class UndefinedMetricError(ToolkitError):
    """A skill score is mathematically undefined for the given series."""


class ConvergenceError(ToolkitError):
    """An iterative solver exhausted its iteration budget before converging."""


class ResultLookupError(ToolkitError, LookupError):
    """A requested model/fold combination does not exist in the run output."""
