import sys
from typing import Optional, Sequence

from src.logging import configure_logging

# Configure logging first so module loggers hand over to loguru
configure_logging()

from src.app.commands import command_router  # noqa: E402
from src.core.application import project_version  # noqa: E402
from src.middleware import ExceptionHandlerMiddleware, command_context  # noqa: E402
from src.settings import settings  # noqa: E402
from src.utils.logging import get_logger  # noqa: E402

logger = get_logger(__name__)

PROG = "face-swap-detect"


def log_system_info(command: str) -> None:
    """Log run context at startup."""
    logger.debug(f"Starting {PROG} {project_version()} command={command}")
    logger.debug(f"Environment: {settings.environment}")
    logger.debug(f"Profile: {settings.profile.value}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    parser = command_router.build_parser(PROG, project_version())
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(e.code or 0)
    if args.log_level:
        configure_logging(args.log_level)

    with command_context(args.command):
        log_system_info(args.command)
        return ExceptionHandlerMiddleware().dispatch(args.command, lambda: args.handler(args))


def run() -> None:
    """Console script entrypoint."""
    sys.exit(main())


if __name__ == "__main__":
    run()
