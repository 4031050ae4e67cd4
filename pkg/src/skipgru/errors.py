"""Exception hierarchy shared across the package."""


class SkipGruError(Exception):
    """Base class for all package errors."""


class ShapeError(SkipGruError):
    """Operands have incompatible dimensions."""


class ParameterError(SkipGruError):
    """An argument value violates an operation's precondition."""


class InputError(SkipGruError):
    """Input data is malformed or unusable (empty corpus, bad query, ...)."""


class RangeError(SkipGruError):
    """A token id falls outside the table it indexes."""


class ConfigError(SkipGruError):
    """Inconsistent configuration (dimension mismatch between components, ...)."""


class StateError(SkipGruError):
    """Required cached state is missing (backward pass without forward cache)."""


class NumericError(SkipGruError):
    """A computation produced non-finite values or is numerically undefined."""


class CheckpointError(SkipGruError):
    """A checkpoint or map file is corrupt, truncated, or version-incompatible."""


class ConvergenceError(SkipGruError):
    """An iterative solver failed to reach its convergence criterion."""


class MetricError(SkipGruError):
    """A metric is undefined for the given inputs (zero-variance correlation)."""
