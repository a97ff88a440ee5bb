"""Exception types shared across the package."""


class PhotonflowError(Exception):
    """Base class for package errors."""


class ConfigError(PhotonflowError, ValueError):
    """Invalid configuration or input data (CLI exit code 2)."""


class CapExceededError(PhotonflowError, RuntimeError):
    """A configured numerical cap would be exceeded (CLI exit code 3)."""
