import sys
import traceback
from typing import Callable

from pydantic import BaseModel, ValidationError

from src.services.utils.exceptions import DetectorException
from src.settings import settings
from src.utils.logging import get_logger

logger = get_logger(__name__)

EXIT_INTERNAL = 4


class ErrorResponseModel(BaseModel):
    """Standardized error record written to stderr."""
    success: bool = False
    exception_type: str
    message: str
    error_code: str | None = None
    exit_code: int
    details: dict = {}
    stack: str | None = None


class ExceptionHandlerMiddleware:
    """Runs a command handler and turns exceptions into exit codes and error records."""

    # Checked in order; the first matching base class wins.
    exception_map = (
        (
            DetectorException,
            {
                "exit_code": lambda exc: exc.exit_code,
                "log_func": logger.warning,
                "message": lambda exc: exc.message,
                "error_code": lambda exc: exc.error_code,
                "details": lambda exc: exc.details,
            },
        ),
        (
            ValidationError,
            {
                "exit_code": 2,
                "log_func": logger.warning,
                "message": lambda exc: f"Validation error occurred: {exc.error_count()} invalid field(s)",
                "error_code": "VALIDATION_ERROR",
                "details": lambda exc: {"errors": exc.errors(include_url=False, include_context=False)},
            },
        ),
        (
            OSError,
            {
                "exit_code": 2,
                "log_func": logger.warning,
                "message": lambda exc: f"I/O error: {exc}",
                "error_code": "IO_ERROR",
                "details": lambda exc: {"path": str(exc.filename)} if exc.filename else {},
            },
        ),
    )

    default_config = {
        "exit_code": EXIT_INTERNAL,
        "log_func": logger.error,
        "message": lambda exc: f"An unexpected error occurred: {exc}",
        "error_code": "INTERNAL_ERROR",
        "details": lambda exc: {},
    }

    def _config_for(self, exc: Exception) -> dict:
        for exc_type, config in self.exception_map:
            if isinstance(exc, exc_type):
                return config
        return self.default_config

    @staticmethod
    def _resolve(value, exc: Exception):
        return value(exc) if callable(value) else value

    def dispatch(self, command: str, handler: Callable[[], int]) -> int:
        """Return the handler's exit code, or the mapped code of the exception it raised."""
        try:
            return handler()
        except KeyboardInterrupt:
            logger.warning(f"{command} interrupted")
            return EXIT_INTERNAL
        except Exception as e:
            stack_trace = traceback.format_exc() if settings.app.environment == "dev" else None
            config = self._config_for(e)
            message = self._resolve(config["message"], e)
            exit_code = self._resolve(config["exit_code"], e)

            config["log_func"](f"{e.__class__.__name__}: {message}")
            if config is self.default_config:
                logger.debug(traceback.format_exc())

            response = ErrorResponseModel(
                exception_type=e.__class__.__name__,
                message=message,
                error_code=self._resolve(config["error_code"], e),
                exit_code=exit_code,
                details=self._resolve(config["details"], e),
                stack=stack_trace,
            )
            sys.stderr.write(response.model_dump_json(exclude_none=True) + "\n")
            return exit_code

