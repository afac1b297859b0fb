import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from src.settings import LogLevel, Profile

CommandHandler = Callable[[argparse.Namespace], int]


@dataclass(frozen=True)
class Argument:
    flags: tuple[str, ...]
    options: dict[str, Any] = field(default_factory=dict)


def argument(*flags: str, **options: Any) -> Argument:
    """Declare one ``add_argument`` call."""
    return Argument(flags=flags, options=options)


@dataclass
class Command:
    name: str
    help: str
    handler: CommandHandler
    arguments: Sequence[Argument] = ()


COMMON_ARGUMENTS = (
    argument("--config", type=Path, default=None, help="Flat TOML config file (<section>_<field> keys)"),
    argument("--profile", choices=[p.value for p in Profile], default=None, help="Training scale preset"),
    argument("--log-level", choices=[l.value for l in LogLevel], default=None, help="Log verbosity on stderr"),
)


class CommandRouter:
    """Collects sub-commands and builds the argparse parser."""

    def __init__(self) -> None:
        self.commands: dict[str, Command] = {}

    def command(self, name: str, help: str, arguments: Sequence[Argument] = ()) -> Callable[[CommandHandler], CommandHandler]:
        def decorator(handler: CommandHandler) -> CommandHandler:
            self.commands[name] = Command(name=name, help=help, handler=handler, arguments=arguments)
            return handler

        return decorator

    def include_router(self, router: "CommandRouter") -> None:
        self.commands.update(router.commands)

    def build_parser(self, prog: str, version: str) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog=prog,
            description="Style feature face-swap detection: data, training, calibration, detection and evaluation.",
        )
        parser.add_argument("--version", action="version", version=f"%(prog)s {version}")
        subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
        for command in self.commands.values():
            subparser = subparsers.add_parser(command.name, help=command.help, description=command.help)
            for arg in (*command.arguments, *COMMON_ARGUMENTS):
                subparser.add_argument(*arg.flags, **arg.options)
            subparser.set_defaults(handler=command.handler)
        return parser
