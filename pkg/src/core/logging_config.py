"""
Logging Configuration

Sets up structured logging with JSON formatting for batch runs
and readable formatting for interactive use. Logs go to stderr so
they never interleave with CSV written to stdout.
"""

import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

_EXTRA_FIELDS = ("run_id", "trial", "method", "scenario_count", "iteration")


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    """Custom JSON formatter with additional fields"""

    def add_fields(self, log_record, record, message_dict):
        super().add_fields(log_record, record, message_dict)

        log_record["level"] = record.levelname
        log_record["logger"] = record.name
        log_record["timestamp"] = self.formatTime(record, self.datefmt)

        for field in _EXTRA_FIELDS:
            if hasattr(record, field):
                log_record[field] = getattr(record, field)


def setup_logging(
    level: int = logging.INFO,
    json_format: bool = True,
    log_file: Optional[str] = None,
) -> logging.Logger:
    """
    Configure application logging

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        json_format: Use JSON formatting (True for batch runs, False for terminals)
        log_file: Optional file path to write logs

    Returns:
        Configured logger instance
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)

    if json_format:
        formatter: logging.Formatter = CustomJsonFormatter(
            "%(timestamp)s %(level)s %(name)s %(message)s"
        )
    else:
        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    # scipy's optimizers are chatty at DEBUG
    logging.getLogger("scipy").setLevel(logging.WARNING)

    root_logger.debug(
        "Logging configured",
        extra={
            "log_level": logging.getLevelName(level),
            "json_format": json_format,
            "log_file": log_file,
        },
    )

    return root_logger


class TrialLogger:
    """Logger adapter that binds trial-scoped fields to every record"""

    def __init__(self, logger: logging.Logger, trial: int, method: Optional[str] = None, **kwargs):
        self.logger = logger
        self.trial = trial
        self.extra = {"trial": trial, **kwargs}
        if method is not None:
            self.extra["method"] = method

    def bind(self, **kwargs) -> "TrialLogger":
        merged = {k: v for k, v in self.extra.items() if k != "trial"}
        merged.update(kwargs)
        return TrialLogger(self.logger, self.trial, **merged)

    def debug(self, message: str, **kwargs):
        self.logger.debug(message, extra={**self.extra, **kwargs})

    def info(self, message: str, **kwargs):
        self.logger.info(message, extra={**self.extra, **kwargs})

    def warning(self, message: str, **kwargs):
        self.logger.warning(message, extra={**self.extra, **kwargs})

    def error(self, message: str, exc_info=False, **kwargs):
        self.logger.error(message, exc_info=exc_info, extra={**self.extra, **kwargs})
