"""Exception types shared across the package."""


class DereflectError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(DereflectError):
    """Invalid configuration key, value, or model hyperparameter."""


class DataError(DereflectError):
    """Unusable input data (empty datasets, unreadable files, bad pairs)."""


class CheckpointFormatError(DereflectError):
    """Checkpoint or sidecar file does not match the expected format."""
