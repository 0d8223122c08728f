"""Exception types raised across the package."""


class MmhclError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MmhclError, ValueError):
    """An argument has the wrong shape, range or value."""


class ZeroNormError(InvalidArgumentError):
    """A vector with zero norm was given where a direction is required."""


class NumericError(MmhclError, ArithmeticError):
    """A computation produced or received non-finite values."""


class InvalidStateError(MmhclError, RuntimeError):
    """An object is used in a state that no longer matches its inputs."""


class LoadError(MmhclError, ValueError):
    """A data file could not be parsed or violates its format."""


class CheckpointError(LoadError):
    """A checkpoint file is truncated or corrupt."""


class CheckpointVersionError(CheckpointError):
    """A checkpoint was written by an incompatible format version."""


class ConfigError(MmhclError, ValueError):
    """A run or training configuration is invalid."""
