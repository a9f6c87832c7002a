"""
Experiment History
SQLite record of CLI runs and the metrics they produced, used for sweep
leaderboards and for comparing runs after the fact.
"""

import os
import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from src.core.evaluation.ranking import EvalResult
from src.core.observability.logging import get_logger

logger = get_logger("history_db")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ExperimentHistoryDB:
    """
    Run history and per-run metrics.

    Schema:
        runs:
            - run_id (TEXT PRIMARY KEY): UUIDv4 run identifier
            - command (TEXT): CLI command (train | evaluate | sweep | ...)
            - config_yaml (TEXT): Resolved configuration
            - status (TEXT): running | completed | failed
            - error (TEXT): Error message if failed (NULL otherwise)
            - started_at (TEXT): ISO8601 start time
            - finished_at (TEXT): ISO8601 end time (NULL if running)

        results:
            - result_id (INTEGER PRIMARY KEY)
            - run_id (TEXT FOREIGN KEY): Links to runs table
            - split (TEXT): val | test | lower | inductive | upper
            - model (TEXT): Model label
            - layers (INTEGER): Propagation products / layers
            - fusion (TEXT): mean | concat
            - k (INTEGER): Cutoff
            - recall (REAL): Fraction in [0, 1]
            - ndcg (REAL): Fraction in [0, 1]
            - seed (INTEGER)
            - wall_time (REAL): Seconds
    """

    def __init__(self, db_path: Optional[str] = None):
        """
        Initialize history database.

        Args:
            db_path: Path to SQLite file (default: $HISTORY_DB or <OUTPUT_ROOT>/history.db)
        """
        default_path = Path(os.getenv("OUTPUT_ROOT", "runs")) / "history.db"
        self.db_path = str(db_path or os.getenv("HISTORY_DB", default_path))
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self._initialize_schema()
        logger.debug("ExperimentHistoryDB initialized", db_path=self.db_path)

    def _initialize_schema(self):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    run_id TEXT PRIMARY KEY,
                    command TEXT NOT NULL,
                    config_yaml TEXT NOT NULL,
                    status TEXT NOT NULL CHECK (status IN ('running', 'completed', 'failed')),
                    error TEXT,
                    started_at TEXT NOT NULL,
                    finished_at TEXT
                )
            """)
            conn.execute("""
                CREATE TABLE IF NOT EXISTS results (
                    result_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id TEXT NOT NULL,
                    split TEXT NOT NULL,
                    model TEXT NOT NULL,
                    layers INTEGER NOT NULL,
                    fusion TEXT NOT NULL,
                    k INTEGER NOT NULL,
                    recall REAL NOT NULL,
                    ndcg REAL NOT NULL,
                    seed INTEGER NOT NULL,
                    wall_time REAL,
                    FOREIGN KEY (run_id) REFERENCES runs (run_id)
                )
            """)

    def create_run(self, run_id: str, command: str, config_yaml: str) -> None:
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                INSERT INTO runs (run_id, command, config_yaml, status, started_at)
                VALUES (?, ?, ?, 'running', ?)
            """, (run_id, command, config_yaml, _now()))
        logger.info("Created run entry", run_id=run_id, command=command)

    def update_run_status(self, run_id: str, status: str, error: Optional[str] = None) -> None:
        """
        Update run status (completed | failed).

        Args:
            run_id: Run identifier
            status: New status value
            error: Error message if status is 'failed'
        """
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                UPDATE runs
                SET status = ?, error = ?, finished_at = ?
                WHERE run_id = ?
            """, (status, error, _now(), run_id))
        logger.info("Updated run status", run_id=run_id, status=status, error=error)

    def add_result(
        self,
        run_id: str,
        split: str,
        model: str,
        layers: int,
        fusion: str,
        result: EvalResult,
        seed: int,
        wall_time: Optional[float] = None,
    ) -> int:
        """
        Record one metric row.

        Returns:
            result_id (auto-incremented)
        """
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.execute("""
                INSERT INTO results (run_id, split, model, layers, fusion, k, recall, ndcg, seed, wall_time)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (run_id, split, model, int(layers), fusion, int(result.k),
                  float(result.recall), float(result.ndcg), int(seed), wall_time))
            return cursor.lastrowid

    def get_run(self, run_id: str) -> Optional[Dict[str, str]]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            row = conn.execute("""
                SELECT run_id, command, config_yaml, status, error, started_at, finished_at
                FROM runs
                WHERE run_id = ?
            """, (run_id,)).fetchone()
        if row is None:
            logger.warning("Run not found", run_id=run_id)
            return None
        return dict(row)

    def get_results(self, run_id: str) -> List[Dict[str, object]]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            rows = conn.execute("""
                SELECT split, model, layers, fusion, k, recall, ndcg, seed, wall_time
                FROM results
                WHERE run_id = ?
                ORDER BY result_id
            """, (run_id,)).fetchall()
        return [dict(row) for row in rows]

    def leaderboard(self, split: str = "val", k: int = 20, limit: int = 10) -> List[Dict[str, object]]:
        """
        Best recorded results at one cutoff, highest recall first.

        Example:
            >>> db.leaderboard("val", 20, limit=1)
            [{"run_id": "abc-123", "model": "twin_cf_lgcn_u", "layers": 3, "recall": 0.182, ...}]
        """
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            rows = conn.execute("""
                SELECT r.run_id, r.model, r.layers, r.fusion, r.k, r.recall, r.ndcg, r.seed, r.wall_time
                FROM results r
                JOIN runs ON runs.run_id = r.run_id
                WHERE r.split = ? AND r.k = ? AND runs.status = 'completed'
                ORDER BY r.recall DESC, r.result_id ASC
                LIMIT ?
            """, (split, int(k), int(limit))).fetchall()
        board = [dict(row) for row in rows]
        logger.info("Queried leaderboard", split=split, k=k, count=len(board))
        return board
