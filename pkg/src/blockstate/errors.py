"""Exception hierarchy.

The CLI maps these onto exit codes: configuration/input problems are usage
errors, data problems (missing or malformed files) are data errors, and
anything raised from a factorization or a diverging optimizer is a numerical
error.
"""

from __future__ import annotations


class BlockstateError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(BlockstateError, ValueError):
    """Unsupported or inconsistent configuration (block size, window, class...)."""


class InputError(BlockstateError, ValueError):
    """A value lies outside the domain of an operation."""


class DimensionError(BlockstateError, ValueError):
    """Shapes or site counts do not line up."""


class DataError(BlockstateError):
    """Problems reading dataset or checkpoint files."""


class IDXParseError(DataError):
    """Base class for malformed IDX files."""


class BadMagicError(IDXParseError):
    pass


class TruncatedFileError(IDXParseError):
    pass


class CountMismatchError(IDXParseError):
    pass


class CheckpointError(DataError):
    pass


class NumericalError(BlockstateError, ArithmeticError):
    """A numerical routine failed or produced non-finite values."""


class NotPSDError(NumericalError):
    pass


class DegenerateModelError(NumericalError):
    pass
