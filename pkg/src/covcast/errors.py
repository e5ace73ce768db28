"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config problems exit 2, data
problems exit 3, numerical failures exit 4.
"""


class CovcastError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CovcastError):
    """Invalid configuration value or combination."""


class DataError(CovcastError):
    """Problem with input data (files, panels, alignment)."""


class ParseError(DataError):
    """Malformed input file; the message names the offending row."""


class InsufficientDataError(DataError):
    """Not enough observations for the requested operation."""


class AlignmentError(DataError):
    """Series cannot be aligned on a common calendar."""


class NumericalError(CovcastError):
    """Numerical failure (non-finite values, degenerate systems)."""
