"""Error taxonomy shared across the package.

Each class maps to a documented CLI exit code so failures stay
machine-parsable end to end.
"""


class AclocError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    kind = "error"


class ConfigError(AclocError):
    """Bad or inconsistent configuration (unknown keys, invalid values)."""

    exit_code = 2
    kind = "config"


class DataValidationError(AclocError):
    """Input data rejected: missing files, corrupt headers, bad records."""

    exit_code = 3
    kind = "data"


class NumericError(AclocError):
    """Numeric failure: non-finite loss, failed gradient check, bad shapes."""

    exit_code = 4
    kind = "numeric"


class ShapeError(NumericError):
    """Dimension mismatch between tensors; message names both shapes."""
