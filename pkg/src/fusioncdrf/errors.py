"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class FusionError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DataError(FusionError, ValueError):
    """Malformed input data or an unmet data precondition."""

    exit_code = 3


class SourceSetError(DataError):
    """A source set required by an estimator contains no records."""


class NumericError(FusionError, ArithmeticError):
    """A numerical routine failed (singular system, non-finite values)."""

    exit_code = 4


class ConfigError(FusionError, ValueError):
    """Invalid configuration value."""

    exit_code = 2
