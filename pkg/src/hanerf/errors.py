"""Exception types shared across the package."""


class HanerfError(Exception):
    """Base class for all package errors."""


class InputError(HanerfError, ValueError):
    """Invalid argument: out-of-bounds pixel, undersized image, bad shape."""


class ConfigError(HanerfError, ValueError):
    """Inconsistent configuration or optimizer state."""


class GenerationError(HanerfError):
    """Synthetic dataset generation could not satisfy its constraints."""


class TrainingDivergenceError(HanerfError, FloatingPointError):
    """A loss or rendered value became non-finite."""

    def __init__(self, message, iteration=None, last_checkpoint=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_checkpoint = last_checkpoint


class CheckpointError(HanerfError):
    """Base class for checkpoint persistence failures."""


class CheckpointFormatError(CheckpointError):
    """File does not start with the checkpoint magic or its header is unreadable."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint payload is shorter than its header declares."""


class CheckpointIncompatibleError(CheckpointError):
    """Checkpoint parameters do not match the requested model configuration."""
