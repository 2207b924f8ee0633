from .logging_config import bind_run_context, clear_run_context, get_logger, setup_logging
from .settings import Settings, get_settings

__all__ = [
    "bind_run_context",
    "clear_run_context",
    "get_logger",
    "setup_logging",
    "Settings",
    "get_settings",
]
