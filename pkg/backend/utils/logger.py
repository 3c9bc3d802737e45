"""
Spray Metrizer - Run Logger (Observability)
===========================================

Structured logging for pipeline runs: every stage of a run (sample,
classify, reconstruct, compare, final, error) becomes one JSON record that
is kept in memory and, when a log directory is configured, appended to a
JSON-lines trace file.

The run id and timestamps live only in the trace; reports never see them.

Author: Alfred Munga
License: MIT
"""

import json
import logging
import time
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from pythonjsonlogger import jsonlogger

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

STAGES = ("sample", "classify", "reconstruct", "compare", "final", "error")


def configure_logging(level: str = "INFO", json_output: bool = False) -> None:
    """
    Configure the root logger.

    Args:
        level: Logging level name
        json_output: Emit one JSON object per record instead of plain text
    """
    root = logging.getLogger()
    root.setLevel(level.upper())
    handler = logging.StreamHandler()
    if json_output:
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.handlers = [handler]


class RunLogger:
    """
    Structured trace of one pipeline run.

    Attributes:
        run_id: Unique identifier of this run
        records: Stage records in chronological order
        log_file: JSON-lines file, or None when tracing to disk is off
    """

    def __init__(self, run_id: Optional[str] = None, log_dir: Optional[str] = None):
        self.run_id = run_id or f"run_{uuid.uuid4().hex[:12]}"
        self.records: List[Dict[str, Any]] = []
        self._started = time.perf_counter()
        self._timings: Dict[str, float] = {}

        self.log_file: Optional[Path] = None
        if log_dir:
            directory = Path(log_dir)
            directory.mkdir(parents=True, exist_ok=True)
            self.log_file = directory / f"run_trace_{datetime.now().strftime('%Y%m%d')}.jsonl"

        logger.debug(f"RunLogger initialized with run_id={self.run_id}")

    def log_stage(self, stage: str, content: Any, metadata: Optional[Dict[str, Any]] = None) -> None:
        """
        Record one stage.

        Args:
            stage: One of STAGES
            content: Stage payload (must be JSON serializable)
            metadata: Extra context such as elapsed seconds
        """
        if stage not in STAGES:
            raise ValueError(f"Unknown stage '{stage}', expected one of {STAGES}")
        entry = {
            "timestamp": datetime.now().isoformat(),
            "run_id": self.run_id,
            "stage": stage,
            "content": content,
            "metadata": metadata or {},
        }
        self.records.append(entry)

        if self.log_file is not None:
            try:
                with open(self.log_file, "a") as f:
                    f.write(json.dumps(entry, default=str) + "\n")
            except OSError as e:
                logger.error(f"Failed to write trace entry: {e}")

        status = "❌" if stage == "error" else "✅"
        logger.info(f"[{stage.upper()}] {status} {self._preview(content)}")

    def timed(self, stage: str) -> "_StageTimer":
        """Context manager that records the elapsed time of a stage."""
        return _StageTimer(self, stage)

    def log_error(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        self.log_stage("error", {"error_message": message, "error_details": details or {}})

    @property
    def timings(self) -> Dict[str, float]:
        return dict(self._timings)

    def get_summary(self) -> Dict[str, Any]:
        """Stage counts, failures and total duration."""
        counts = {stage: sum(1 for r in self.records if r["stage"] == stage) for stage in STAGES}
        return {
            "run_id": self.run_id,
            "total_records": len(self.records),
            "stage_counts": counts,
            "error_count": counts["error"],
            "duration": round(time.perf_counter() - self._started, 3),
            "log_file": str(self.log_file) if self.log_file else None,
        }

    @staticmethod
    def _preview(content: Any) -> str:
        text = content if isinstance(content, str) else json.dumps(content, default=str)
        return text if len(text) <= 100 else text[:100] + "..."


class _StageTimer:
    def __init__(self, run_logger: RunLogger, stage: str):
        self.run_logger = run_logger
        self.stage = stage

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        elapsed = time.perf_counter() - self._start
        timings = self.run_logger._timings
        timings[self.stage] = timings.get(self.stage, 0.0) + elapsed
        return False
