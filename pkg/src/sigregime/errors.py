"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, data problems with 3, numerical failures with 4.
"""


class SigregimeError(Exception):
    """Base class for package-specific errors."""


class ConfigError(SigregimeError):
    """Invalid experiment configuration (bad schema, unknown keys, bad values)."""


class DataError(SigregimeError):
    """Malformed or unusable input data (CSV ingestion, shape mismatches)."""


class NumericError(SigregimeError):
    """A numerical routine produced non-finite values or failed to converge."""


class CapacityError(SigregimeError):
    """A requested truncation order would exceed the configured memory cap."""
