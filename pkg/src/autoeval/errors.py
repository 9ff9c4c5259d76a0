"""Exception types shared across the package."""


class AutoevalError(Exception):
    """Base class for all package-specific failures."""


class BundleError(AutoevalError):
    """A bundle directory or in-memory bundle violates the format contract."""


class ConfigError(AutoevalError):
    """A run configuration is missing or inconsistent."""
