"""Command middleware: exception handling and logging context."""

from .exception import ExceptionHandlerMiddleware
from .request import command_context, set_run_context

__all__ = ["ExceptionHandlerMiddleware", "command_context", "set_run_context"]
