"""Logging configuration for bw-planner.

Console logs go to stderr; stdout carries only reports. Records emitted
while a replication runs are tagged with its index, so interleaved output
from worker threads stays attributable.
"""

import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, Optional

# Package logger
logger = logging.getLogger("bw_planner")

VERBOSE_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(replication)s%(message)s"
NORMAL_FORMAT = "%(replication)s%(message)s"
DEBUG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s (%(filename)s:%(lineno)d): %(replication)s%(message)s"

_current_replication: ContextVar[Optional[int]] = ContextVar("replication", default=None)


@contextmanager
def replication_context(replication: int) -> Iterator[None]:
    """Tag log records of the current thread with a replication index."""
    token = _current_replication.set(replication)
    try:
        yield
    finally:
        _current_replication.reset(token)


class ReplicationFilter(logging.Filter):
    """Sets ``record.replication`` to ``"[rep N] "``, or ``""`` outside replications."""

    def filter(self, record: logging.LogRecord) -> bool:
        replication = _current_replication.get()
        record.replication = "" if replication is None else f"[rep {replication}] "
        return True


class ColorFormatter(logging.Formatter):
    """Colours the level tag when stderr is a terminal."""

    COLORS = {
        logging.DEBUG: "\033[36m",
        logging.INFO: "\033[32m",
        logging.WARNING: "\033[33m",
        logging.ERROR: "\033[31m",
        logging.CRITICAL: "\033[1;31m",
    }
    RESET = "\033[0m"

    def __init__(self, fmt: str, use_colors: bool = True):
        super().__init__(fmt, datefmt="%H:%M:%S")
        self.use_colors = use_colors and sys.stderr.isatty()

    def format(self, record: logging.LogRecord) -> str:
        message = super().format(record)
        tag = f"[{record.levelname}]"
        if self.use_colors and record.levelno in self.COLORS and tag in message:
            return message.replace(tag, f"{self.COLORS[record.levelno]}{tag}{self.RESET}", 1)
        return message


def _level(verbosity: int, quiet: bool) -> int:
    if quiet:
        return logging.ERROR
    return logging.DEBUG if verbosity >= 2 else logging.INFO


def _format(verbosity: int) -> str:
    if verbosity >= 2:
        return DEBUG_FORMAT
    return VERBOSE_FORMAT if verbosity == 1 else NORMAL_FORMAT


def setup_logging(
    verbosity: int = 0,
    quiet: bool = False,
    log_file: Optional[str] = None,
) -> None:
    """Configure the bw_planner logger.

    Args:
        verbosity: 0 for messages only, 1 adds timestamps and levels, 2+ debug detail
        quiet: Only errors reach the console
        log_file: Optional path receiving every record at DEBUG
    """
    logger.setLevel(logging.DEBUG)  # filter at handler level
    logger.handlers.clear()
    tagger = ReplicationFilter()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(_level(verbosity, quiet))
    console_handler.setFormatter(ColorFormatter(_format(verbosity)))
    console_handler.addFilter(tagger)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(DEBUG_FORMAT))
        file_handler.addFilter(tagger)
        logger.addHandler(file_handler)

    # root finding and quadrature stay quiet below warnings
    logging.getLogger("numpy").setLevel(logging.WARNING)
    logging.getLogger("scipy").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Child logger of ``bw_planner`` for a module name."""
    if name.startswith("bw_planner."):
        return logging.getLogger(name)
    return logging.getLogger(f"bw_planner.{name}")
