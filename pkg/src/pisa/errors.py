"""Shared exception types, mapped to CLI exit codes in pisa.cli."""


class PisaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PisaError):
    """Invalid configuration or usage (CLI exit code 2)."""


class DataError(PisaError):
    """Malformed or degenerate input data (CLI exit code 3)."""


class MetricError(DataError):
    """A metric is undefined on the given data, e.g. AUC with one class."""


class NumericError(PisaError):
    """Non-finite values encountered during optimization (CLI exit code 4)."""
