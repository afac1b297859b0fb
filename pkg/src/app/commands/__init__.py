"""Command-line commands."""
from src.app.commands.router import CommandRouter
from src.app.commands import calibrate, detect, evaluate, generate_data, train

command_router = CommandRouter()
command_router.include_router(generate_data.router)
command_router.include_router(train.router)
command_router.include_router(calibrate.router)
command_router.include_router(detect.router)
command_router.include_router(evaluate.router)

__all__ = ["command_router"]
