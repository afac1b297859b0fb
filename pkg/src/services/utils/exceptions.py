class DetectorException(Exception):
    """Base error for the detector; carries an error code and the CLI exit code."""

    default_error_code: str = "DETECTOR_ERROR"
    default_exit_code: int = 2

    def __init__(
        self,
        message: str,
        error_code: str | None = None,
        details: dict | None = None,
        exit_code: int | None = None,
    ):
        self.message = message
        self.error_code = error_code or self.default_error_code
        self.details = details or {}
        self.exit_code = exit_code if exit_code is not None else self.default_exit_code
        super().__init__(self.message)


class ConfigurationError(DetectorException):
    """Invalid or inconsistent configuration."""

    default_error_code = "CONFIGURATION_ERROR"


class InputValidationError(DetectorException):
    """Inputs violate a precondition (shapes, labels, empty splits)."""

    default_error_code = "VALIDATION_ERROR"


class DegenerateInputError(InputValidationError):
    """Zero-norm vectors or empty spatial maps."""

    default_error_code = "DEGENERATE_INPUT"


class InputError(DetectorException):
    """Unreadable or missing input files."""

    default_error_code = "INPUT_ERROR"


class NumericError(DetectorException):
    """Non-finite activations or losses."""

    default_error_code = "NUMERIC_ERROR"
    default_exit_code = 3
