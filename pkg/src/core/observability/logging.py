"""
Structured JSON Logging for Training and Evaluation Runs
Every component logs through get_logger(); entries are grouped by run_id.

Logs are grouped by run_id in run-specific files so a full training or
inference run can be replayed from its log.
"""

import json
import logging
import os
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np


class StructuredLogger:
    """
    Provides structured JSON logging grouped by run_id.

    Logs are written to run-specific files where all entries for a run_id
    are grouped under a parent JSON object.

    File structure: logs/runs/YYYY-MM-DD/<run_id>.json
    Format: {
        "run_id": "...",
        "start_time": "...",
        "end_time": "...",
        "logs": [
            {"ts": "...", "service": "...", "level": "...", "message": "...", ...},
            ...
        ]
    }
    """

    # Class-level cache for run data (run_id -> log entries)
    _run_cache = {}
    _cache_lock = threading.Lock()

    # Service to subfolder mapping
    _SERVICE_FOLDERS = {
        "interaction_graph": "graph",

        "propagation": "models",
        "networks": "models",

        "sampling": "training",
        "optimizer": "training",
        "trainer": "training",

        "ranking": "evaluation",

        "datasets": "data",

        "inductive": "inductive",

        "verify": "verification",

        "checkpoint": "storage",
        "history_db": "storage",

        "cli": "cli",
    }

    def __init__(self, service_name: str, log_dir: Optional[str] = None):
        """
        Initialize structured logger for a specific service.

        Args:
            service_name: Component name (trainer, ranking, datasets, etc.)
            log_dir: Directory for JSON log files (default: $LOG_DIR from .env)
        """
        self.service_name = service_name
        self.log_dir = Path(log_dir or os.getenv("LOG_DIR", "logs"))
        self.runs_dir = self.log_dir / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)

        subfolder = self._SERVICE_FOLDERS.get(service_name, "other")
        self.service_log_dir = self.log_dir / subfolder
        self.service_log_dir.mkdir(parents=True, exist_ok=True)

        today = datetime.now().strftime("%Y-%m-%d")
        self.service_log_file = self.service_log_dir / f"{service_name}_{today}.jsonl"

        self.logger = logging.getLogger(service_name)
        self.logger.setLevel(os.getenv("LOG_LEVEL", "INFO"))

        # Console output only for the CLI, or everything in DEBUG mode
        console_log_level = os.getenv("CONSOLE_LOG_LEVEL", "WARNING")
        show_console = service_name == "cli" or console_log_level == "DEBUG"

        if show_console and not self.logger.handlers:
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(logging.Formatter("%(message)s"))
            self.logger.addHandler(console_handler)

    @staticmethod
    def _now() -> str:
        return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")

    @staticmethod
    def _plain(value: Any) -> Any:
        """Convert numpy scalars/arrays into JSON-native values."""
        if isinstance(value, np.generic):
            return value.item()
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, (set, frozenset, tuple)):
            return [StructuredLogger._plain(v) for v in value]
        if isinstance(value, dict):
            return {str(k): StructuredLogger._plain(v) for k, v in value.items()}
        if isinstance(value, list):
            return [StructuredLogger._plain(v) for v in value]
        return value

    def _get_run_file_path(self, run_id: str) -> Path:
        """Get the file path for a specific run."""
        today = datetime.now().strftime("%Y-%m-%d")
        date_dir = self.runs_dir / today
        date_dir.mkdir(parents=True, exist_ok=True)
        return date_dir / f"{run_id}.json"

    def _write_run_log(self, run_id: str):
        """Write the complete run log to file."""
        with self._cache_lock:
            if run_id not in self._run_cache:
                return

            run_data = self._run_cache[run_id]
            run_file = self._get_run_file_path(run_id)
            run_data["end_time"] = self._now()

            temp_file = run_file.with_suffix(".tmp")
            with open(temp_file, "w") as f:
                json.dump(run_data, f, indent=2)
            temp_file.replace(run_file)

    def log_json(
        self,
        level: str,
        message: str,
        run_id: Optional[str] = None,
        duration_ms: Optional[int] = None,
        **extra_fields: Any
    ) -> None:
        """
        Write structured JSON log entry grouped by run_id.

        Args:
            level: Log level (DEBUG, INFO, WARNING, ERROR)
            message: Human-readable log message
            run_id: Identifier of the training/evaluation run (enables grouping)
            duration_ms: Operation duration in milliseconds (optional)
            **extra_fields: Additional context-specific fields
        """
        log_entry: Dict[str, Any] = {
            "ts": self._now(),
            "service": self.service_name,
            "level": level.upper(),
            "message": message,
        }

        if duration_ms is not None:
            log_entry["duration_ms"] = duration_ms

        for key, value in extra_fields.items():
            log_entry[key] = self._plain(value)

        if run_id:
            with self._cache_lock:
                if run_id not in self._run_cache:
                    self._run_cache[run_id] = {
                        "run_id": run_id,
                        "start_time": self._now(),
                        "end_time": None,
                        "logs": []
                    }
                self._run_cache[run_id]["logs"].append(log_entry)

            # Rewritten after each entry so a crash keeps everything logged so far
            self._write_run_log(run_id)

        log_entry["run_id"] = run_id
        with open(self.service_log_file, "a") as f:
            f.write(json.dumps(log_entry) + "\n")

        log_method = getattr(self.logger, level.lower(), self.logger.info)
        extra_msg = " | ".join(f"{k}={v}" for k, v in extra_fields.items() if v is not None)
        full_message = f"{message} | {extra_msg}" if extra_msg else message
        log_method(full_message)

    def debug(self, message: str, **kwargs):
        """Log DEBUG level message."""
        self.log_json("DEBUG", message, **kwargs)

    def info(self, message: str, **kwargs):
        """Log INFO level message."""
        self.log_json("INFO", message, **kwargs)

    def warning(self, message: str, **kwargs):
        """Log WARNING level message."""
        self.log_json("WARNING", message, **kwargs)

    def error(self, message: str, **kwargs):
        """Log ERROR level message."""
        self.log_json("ERROR", message, **kwargs)


def get_logger(service_name: str) -> StructuredLogger:
    """
    Factory function to get a structured logger for a service.

    Args:
        service_name: Component name (trainer, ranking, inductive, etc.)

    Returns:
        StructuredLogger instance configured for the service

    Example:
        >>> logger = get_logger("trainer")
        >>> logger.info("Evaluation", run_id="abc-123", epoch=20, recall=0.12)
    """
    return StructuredLogger(service_name)
