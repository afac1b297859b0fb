from contextlib import contextmanager
from typing import Iterator

from src.logging import COMMAND_CONTEXT, RUN_CONTEXT


@contextmanager
def command_context(command: str) -> Iterator[None]:
    """Set the command name for log records for the duration of a command."""
    command_token = COMMAND_CONTEXT.set(command)
    run_token = RUN_CONTEXT.set("-")
    try:
        yield
    finally:
        RUN_CONTEXT.reset(run_token)
        COMMAND_CONTEXT.reset(command_token)


def set_run_context(run_fingerprint: str) -> None:
    """Attach the resolved run fingerprint to subsequent log records."""
    RUN_CONTEXT.set(run_fingerprint)
