"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies instead of bare ValueError.
"""


class RomforgeError(Exception):
    """Base class for all package errors."""


class UsageError(RomforgeError):
    """Bad invocation: unknown flags, inconsistent options, wrong model kind."""

    exit_code = 2


class DataValidationError(RomforgeError):
    """Malformed or inconsistent input data (files, manifests, shapes)."""

    exit_code = 3


class NumericalError(RomforgeError):
    """A numerical contract failed: singular matrix, divergence, bad residual."""

    exit_code = 4
