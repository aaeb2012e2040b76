"""Exception hierarchy shared across the package."""


class MotionCastError(Exception):
    """Base class for all package errors."""


class DimensionError(MotionCastError, ValueError):
    """Array shapes incompatible with the requested operation."""


class NumericError(MotionCastError, ArithmeticError):
    """A forward computation produced NaN or Inf."""


class ParseError(MotionCastError, ValueError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(MotionCastError, ValueError):
    """Invalid configuration or data partition."""


class CheckpointError(MotionCastError, ValueError):
    """Checkpoint file malformed or inconsistent with its hyperparameters."""


class TrainingDiverged(MotionCastError, RuntimeError):
    """Training hit a non-finite loss. Carries epoch/batch of the failure."""

    def __init__(self, message, epoch=None, batch=None):
        if epoch is not None:
            message = f"epoch {epoch}, batch {batch}: {message}"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
