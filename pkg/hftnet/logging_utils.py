"""
Logging setup shared by main.py and the stage processors.
"""

import json
import logging
import os
from datetime import datetime, timezone
from typing import Optional

import psutil

logger = logging.getLogger(__name__)


class JsonlEventHandler(logging.Handler):
    """Writes one JSON object per log record; ``extra={"event": {...}}`` is merged in."""

    def __init__(self, path: str):
        super().__init__()
        self.path = path
        self._stream = open(path, "a", encoding="utf-8")

    def emit(self, record: logging.LogRecord) -> None:
        try:
            payload = {
                "ts": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
                "level": record.levelname,
                "logger": record.name,
                "message": record.getMessage(),
            }
            event = getattr(record, "event", None)
            if isinstance(event, dict):
                payload.update(event)
            self._stream.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
            self._stream.flush()
        except Exception:
            self.handleError(record)

    def close(self) -> None:
        try:
            self._stream.close()
        finally:
            super().close()


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[str] = "hftnet.log",
    event_log: Optional[str] = None,
) -> logging.Logger:
    """Configure console, file and optional JSONL event logging on the root logger."""
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)

    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - [%(funcName)s:%(lineno)d] - %(message)s'
    )
    simple_formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s'
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    console_handler = logging.StreamHandler()
    console_handler.setLevel(numeric_level)
    console_handler.setFormatter(simple_formatter)
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(detailed_formatter)
        root_logger.addHandler(file_handler)

    if event_log:
        event_handler = JsonlEventHandler(event_log)
        event_handler.setLevel(numeric_level)
        root_logger.addHandler(event_handler)

    return root_logger


def log_memory_usage(stage: str) -> float:
    """Log current process and system memory; returns RSS in MB."""
    try:
        process = psutil.Process(os.getpid())
        memory_mb = process.memory_info().rss / 1024 / 1024
        logger.info(f"Memory usage at {stage}: {memory_mb:.2f} MB")

        system_memory = psutil.virtual_memory()
        logger.debug(
            f"System memory: {system_memory.percent}% used "
            f"({system_memory.available / 1024 / 1024 / 1024:.2f} GB available)"
        )

        if memory_mb > 1000:
            logger.warning(f"High memory usage detected: {memory_mb:.2f} MB")
        return memory_mb
    except Exception as e:
        logger.debug(f"Could not get memory info: {e}")
        return float("nan")
