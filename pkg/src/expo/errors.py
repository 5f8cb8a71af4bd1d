"""Exception types shared across the package."""


class ExpoError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ExpoError, ValueError):
    """Raised for invalid hyperparameters, shapes or layouts."""


class UsageError(ExpoError, RuntimeError):
    """Raised when an operation is called outside its preconditions."""


class GenerationError(ExpoError, RuntimeError):
    """Raised when the scripted demonstrator cannot produce enough successes."""


class CheckpointError(ExpoError, IOError):
    """Raised when a checkpoint or dataset file is missing or corrupt."""
