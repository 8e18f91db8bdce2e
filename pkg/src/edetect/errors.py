"""Exception hierarchy.

Each class maps to a distinct CLI exit status, see :data:`EXIT_CODES`.
"""


class EDetectError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(EDetectError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the domain of a numeric map."""


class DataError(EDetectError, ValueError):
    """Observation violates the model premise (e.g. out of range)."""

    exit_code = 3

    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} (at index {index})")
        self.index = index


class CalibrationError(EDetectError):
    """A calibration routine could not produce a valid parameterization."""

    exit_code = 4


class NumericError(EDetectError, ArithmeticError):
    """A numeric routine failed to converge."""

    exit_code = 5


class StateError(EDetectError):
    """Detector state misuse, e.g. wrong number of increments."""

    exit_code = 1


EXIT_CODES = {
    "config": ConfigError.exit_code,
    "data": DataError.exit_code,
    "calibration": CalibrationError.exit_code,
    "numeric": NumericError.exit_code,
    "io": 6,
}
