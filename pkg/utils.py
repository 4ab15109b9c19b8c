"""Utilities shared by the command-line entry points."""

import argparse
import logging
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from rich.logging import RichHandler

from fusion_framework.core.console import console, error_console

LOGGER_NAME = "fusion_framework"
LOG_FORMAT = "%(asctime)s %(levelname)-8s [%(name)s] %(message)s"


def build_parser(description: str) -> argparse.ArgumentParser:
    current_time_str = datetime.now(
        tz=timezone.utc).strftime("%Y%m%d_%H%M%S%z")
    default_log_path = Path(tempfile.gettempdir()) / \
        f"fusion_{current_time_str}.log"

    parser = argparse.ArgumentParser(description=description)
    parser.add_argument(
        "--log-file",
        default=str(default_log_path),
        help="Log file for the pipeline; default: %(default)s",
    )
    return parser


def enable_default_logger(
    log_file: Optional[str] = None,
    level: int = logging.INFO,
    console_level: int = logging.WARNING,
) -> logging.Logger:
    """Sends package logs to ``log_file`` and warnings to the rich console."""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(min(level, console_level))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

    rich_handler = RichHandler(console=error_console, show_path=False, rich_tracebacks=True)
    rich_handler.setLevel(console_level)
    logger.addHandler(rich_handler)
    logger.propagate = False
    return logger


__all__ = ["build_parser", "console", "error_console", "enable_default_logger"]
