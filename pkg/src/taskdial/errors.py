"""Exception types shared across the package."""


class TaskdialError(Exception):
    """Base class for package errors."""


class ShapeError(TaskdialError):
    """Operand shapes are incompatible for the requested op."""


class ConfigError(TaskdialError):
    """Invalid or inconsistent configuration."""


class NumericsError(TaskdialError):
    """A forward op produced NaN or Inf."""


class DataError(TaskdialError):
    """Malformed corpus record or annotation."""


class StateValidationError(TaskdialError):
    """A dialogue state violates the ontology."""


class QueryError(TaskdialError):
    """Bad database query (unknown domain)."""


class TrainingError(TaskdialError):
    """Unrecoverable training failure (NaN loss, missing gradient)."""


class CheckpointError(TaskdialError):
    """Checkpoint file is unreadable, tampered, or incompatible."""
