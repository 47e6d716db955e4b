"""Exception taxonomy shared across the package.

CLI exit codes map onto these classes: ConfigError -> 2, NumericError -> 3,
DataError / OSError -> 4.
"""


class PsiCodecError(Exception):
    """Base class for all package errors."""


class ShapeError(PsiCodecError):
    """Operand dimensions are inconsistent."""


class ConfigError(PsiCodecError):
    """A configuration value is invalid or internally inconsistent."""


class NumericError(PsiCodecError):
    """A numeric invariant was violated (NaN/Inf, divergence)."""


class UsageError(PsiCodecError):
    """An operation was called outside its contract."""


class DataError(PsiCodecError):
    """Base class for serialized-artifact faults."""


class BadMagicError(DataError):
    """File does not start with the expected magic bytes."""


class BadVersionError(DataError):
    """File version is not supported."""


class TruncatedFileError(DataError):
    """File ended before the declared content was read."""


class CrcMismatchError(DataError):
    """Stored checksum does not match the recomputed one."""
