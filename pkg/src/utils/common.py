"""
Shared utilities for the VITRE pipeline: default paths, the session-log
connection and the insert/load helpers every stage uses.
"""

from __future__ import annotations

import os
import sqlite3
from datetime import datetime, timezone
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.utils.create_db import SCHEMA_SQL
from src.utils.errors import SessionIOError


# Default paths, relative to project root
OUTPUT_DIR = "data/output"
DEFAULT_LOG_PATH = "data/output/vitre_session.db"


def ensure_schema(conn: sqlite3.Connection) -> None:
    """Create any missing tables so `run` can log into a fresh file."""
    conn.executescript(SCHEMA_SQL)
    conn.commit()


def get_db_connection(db_path: str = DEFAULT_LOG_PATH) -> sqlite3.Connection:
    """Get a connection to the session log with standard settings."""
    try:
        parent = os.path.dirname(db_path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        conn = sqlite3.connect(db_path)
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA foreign_keys=ON")
        conn.row_factory = sqlite3.Row
        ensure_schema(conn)
    except (OSError, sqlite3.Error) as e:
        raise SessionIOError(f"cannot open session log {db_path}: {e}") from e
    return conn


def open_existing_log(db_path: str) -> sqlite3.Connection:
    """Like get_db_connection, but the file must already exist."""
    if not os.path.exists(db_path):
        raise SessionIOError(f"session log not found: {db_path}")
    return get_db_connection(db_path)


def now_iso() -> str:
    """Return current UTC time as ISO string."""
    return datetime.now(timezone.utc).isoformat()


def log_pipeline_run(conn: sqlite3.Connection, step_name: str, status: str,
                     records_processed: Optional[int] = None, notes: Optional[str] = None,
                     started_at: Optional[str] = None) -> int:
    """Log a pipeline step execution. Returns run_id."""
    now = now_iso()
    cursor = conn.execute(
        """INSERT INTO pipeline_runs (step_name, started_at, completed_at, status, records_processed, notes)
           VALUES (?, ?, ?, ?, ?, ?)""",
        (step_name, started_at or now, now, status, records_processed, notes)
    )
    conn.commit()
    return cursor.lastrowid


def to_blob(values: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(values, dtype=dtype).tobytes()


def from_blob(blob: bytes, dtype: str, columns: int = 1) -> np.ndarray:
    arr = np.frombuffer(blob, dtype=dtype).copy()
    return arr.reshape(-1, columns) if columns > 1 else arr


def insert_session(conn: sqlite3.Connection, strategy: str, seed: int, truth_source: str,
                   config_text: str, vertex_count: int, faces: np.ndarray,
                   notes: Optional[str] = None) -> int:
    """Register a session and its (fixed) estimate topology. Returns session_id."""
    cursor = conn.execute(
        """INSERT INTO sessions (strategy, seed, truth_source, config_text, vertex_count, started_at, status, notes)
           VALUES (?, ?, ?, ?, ?, ?, 'running', ?)""",
        (strategy, int(seed), truth_source, config_text, int(vertex_count), now_iso(), notes)
    )
    session_id = cursor.lastrowid
    conn.execute(
        "INSERT INTO mesh_topology (session_id, face_count, faces) VALUES (?, ?, ?)",
        (session_id, len(faces), to_blob(faces, "<i4"))
    )
    conn.commit()
    return session_id


def insert_iteration(conn: sqlite3.Connection, session_id: int, record, params_record: str,
                     vertices: np.ndarray, uncertainty: np.ndarray) -> None:
    """Store one IterationRecord with the estimate and field it ended on."""
    conn.execute(
        """INSERT INTO iterations
           (session_id, iteration, chamfer_mm, cumulative_failures, n_attractors,
            selected_vertex, outcome, failure_reason, params, vertices, uncertainty)
           VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)""",
        (session_id, record.iteration, record.chamfer_mm, record.cumulative_failures,
         record.n_attractors, record.selected_vertex, record.outcome, record.failure_reason,
         params_record, to_blob(vertices, "<f8"), to_blob(uncertainty, "<f8"))
    )


def insert_attractors(conn: sqlite3.Connection, session_id: int, iteration: int,
                      attractors: Sequence) -> None:
    conn.executemany(
        """INSERT INTO attractors (session_id, iteration, x, y, z, uncertainty, source)
           VALUES (?, ?, ?, ?, ?, ?, ?)""",
        [(session_id, iteration, float(a.position[0]), float(a.position[1]), float(a.position[2]),
          a.uncertainty, a.source.value) for a in attractors]
    )


def finish_session(conn: sqlite3.Connection, session_id: int, status: str,
                   notes: Optional[str] = None) -> None:
    conn.execute(
        "UPDATE sessions SET completed_at = ?, status = ?, notes = COALESCE(?, notes) WHERE session_id = ?",
        (now_iso(), status, notes, session_id)
    )
    conn.commit()


def latest_session_id(conn: sqlite3.Connection) -> int:
    row = conn.execute("SELECT MAX(session_id) FROM sessions").fetchone()
    if row is None or row[0] is None:
        raise SessionIOError("session log contains no sessions")
    return int(row[0])


def load_snapshot(conn: sqlite3.Connection, session_id: int,
                  iteration: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(vertices, faces, uncertainty) of the estimate at one iteration."""
    topo = conn.execute(
        "SELECT faces FROM mesh_topology WHERE session_id = ?", (session_id,)
    ).fetchone()
    if topo is None:
        raise SessionIOError(f"no session {session_id} in log")
    row = conn.execute(
        "SELECT vertices, uncertainty FROM iterations WHERE session_id = ? AND iteration = ?",
        (session_id, iteration)
    ).fetchone()
    if row is None:
        raise SessionIOError(f"session {session_id} has no iteration {iteration}")
    return (from_blob(row["vertices"], "<f8", 3),
            from_blob(topo["faces"], "<i4", 3).astype(np.int64),
            from_blob(row["uncertainty"], "<f8"))


def load_iteration_rows(conn: sqlite3.Connection, session_id: int) -> List[sqlite3.Row]:
    return conn.execute(
        """SELECT iteration, chamfer_mm, cumulative_failures, n_attractors, selected_vertex,
                  outcome, failure_reason, params, length(vertices) AS vertex_bytes,
                  length(uncertainty) AS field_bytes
           FROM iterations WHERE session_id = ? ORDER BY iteration""",
        (session_id,)
    ).fetchall()
