"""Run configuration and lifecycle."""

from .application import resolve_run_config
from .lifetime import LifecycleManager

__all__ = ["LifecycleManager", "resolve_run_config"]
