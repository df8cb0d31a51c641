"""Exception hierarchy shared across the package."""


class BoltzknnError(Exception):
    """Base class for all package errors."""


class ConfigError(BoltzknnError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DataError(BoltzknnError):
    """Invalid or incompatible data (CLI exit code 3)."""


class NumericalError(BoltzknnError):
    """Numerical failure, e.g. a rejected normalising-constant grid (CLI exit code 4)."""
