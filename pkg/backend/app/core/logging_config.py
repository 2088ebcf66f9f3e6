from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

JSON_LOG_NAME = "execution_log_latest.json"

_NOISY_LOGGERS = (
    "cvxpy",
    "clarabel",
    "scs",
    "joblib",
    "matplotlib",
)

# Attributes every LogRecord carries; anything else arrived through `extra=`.
_RECORD_FIELDS = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record; `extra=` fields and the worker thread are kept."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "timestamp": self.formatTime(record, datefmt="%Y-%m-%dT%H:%M:%S"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "thread": record.threadName,
            "location": f"{record.module}.{record.funcName}:{record.lineno}",
        }
        for key, value in vars(record).items():
            if key not in _RECORD_FIELDS and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False, default=str)


def setup_logging(
    level: Optional[str] = None,
    output_dir: str | Path | None = None,
    logger_name: str = "secure_allocation",
) -> logging.Logger:
    """Root logger with a text stream and a JSON-lines file rewritten per run in `output_dir`."""
    level = level or os.getenv("LOG_LEVEL", "INFO")
    log_dir = Path(output_dir or os.getenv("OUTPUT_DIR", "output")).expanduser()
    log_dir.mkdir(parents=True, exist_ok=True)
    json_log_path = log_dir / JSON_LOG_NAME

    close_logging()
    text_handler = logging.StreamHandler()
    text_handler.setFormatter(logging.Formatter("%(asctime)s | %(levelname)s | %(name)s | %(message)s"))
    json_handler = logging.FileHandler(json_log_path, mode="w", encoding="utf-8")
    json_handler.setFormatter(JsonLineFormatter())
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        handlers=[text_handler, json_handler],
        force=True,
    )

    for noisy in _NOISY_LOGGERS:
        logging.getLogger(noisy).setLevel(logging.WARNING)

    logger = logging.getLogger(logger_name)
    logger.info("Log JSON habilitado em: %s", json_log_path)
    return logger


def close_logging() -> None:
    """Flush and detach the root handlers so the log file can be moved or removed."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)
