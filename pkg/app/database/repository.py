"""SQL access to spaces, the append-only memory log, agents and maintenance events."""

from __future__ import annotations

import json
import sqlite3
from typing import Any, Iterable

from app.models.hub import AgentProfile, ApplyReport
from app.models.records import LogRecord


def space_exists(conn: sqlite3.Connection, space_id: str) -> bool:
    row = conn.execute("SELECT 1 FROM spaces WHERE space_id = ?", (space_id,)).fetchone()
    return row is not None


def ensure_space(conn: sqlite3.Connection, space_id: str) -> bool:
    """Create the space row if missing; return True when it was created."""
    cursor = conn.execute("INSERT OR IGNORE INTO spaces (space_id) VALUES (?)", (space_id,))
    return cursor.rowcount > 0


def list_spaces(conn: sqlite3.Connection) -> list[dict[str, Any]]:
    rows = conn.execute(
        """
        SELECT space_id, generation, store_version, record_count, created_at, updated_at
        FROM spaces
        ORDER BY space_id
        """
    ).fetchall()
    keys = ("space_id", "generation", "store_version", "record_count", "created_at", "updated_at")
    return [dict(zip(keys, row)) for row in rows]


def append_records(conn: sqlite3.Connection, space_id: str, records: Iterable[LogRecord]) -> int:
    rows = [
        (
            space_id,
            record.kind,
            record.record_id,
            None if record.payload is None else json.dumps(record.payload, sort_keys=True),
        )
        for record in records
    ]
    conn.executemany(
        "INSERT INTO memory_log (space_id, record_kind, record_id, payload) VALUES (?, ?, ?, ?)",
        rows,
    )
    return len(rows)


def update_space_meta(
    conn: sqlite3.Connection,
    space_id: str,
    *,
    generation: int,
    store_version: int,
    added_records: int = 0,
) -> None:
    conn.execute(
        """
        UPDATE spaces
        SET generation = ?, store_version = ?, record_count = record_count + ?,
            updated_at = CURRENT_TIMESTAMP
        WHERE space_id = ?
        """,
        (generation, store_version, added_records, space_id),
    )


def load_space_records(conn: sqlite3.Connection, space_id: str) -> list[LogRecord]:
    """All log records of a space in append order."""
    rows = conn.execute(
        "SELECT record_kind, record_id, payload FROM memory_log WHERE space_id = ? ORDER BY seq",
        (space_id,),
    ).fetchall()
    return [
        LogRecord(kind=kind, record_id=record_id, payload=None if payload is None else json.loads(payload))
        for kind, record_id, payload in rows
    ]


def compact_space(conn: sqlite3.Connection, space_id: str, records: list[LogRecord]) -> tuple[int, int]:
    """Replace a space's log by ``records``; return (rows before, rows after)."""
    before = conn.execute(
        "SELECT COUNT(*) FROM memory_log WHERE space_id = ?", (space_id,)
    ).fetchone()[0]
    conn.execute("DELETE FROM memory_log WHERE space_id = ?", (space_id,))
    after = append_records(conn, space_id, records)
    conn.execute(
        "UPDATE spaces SET record_count = ?, updated_at = CURRENT_TIMESTAMP WHERE space_id = ?",
        (after, space_id),
    )
    return before, after


def save_agent(conn: sqlite3.Connection, profile: AgentProfile) -> None:
    conn.execute(
        "INSERT INTO hub_agents (agent_id, space_id, profile) VALUES (?, ?, ?)",
        (profile.agent_id, profile.space_id, profile.model_dump_json()),
    )


def load_agents(conn: sqlite3.Connection) -> list[AgentProfile]:
    rows = conn.execute("SELECT profile FROM hub_agents ORDER BY agent_id").fetchall()
    return [AgentProfile.model_validate_json(row[0]) for row in rows]


def record_envelope(
    conn: sqlite3.Connection, space_id: str, origin_agent: str, report: ApplyReport
) -> None:
    conn.execute(
        """
        INSERT OR IGNORE INTO applied_envelopes
            (envelope_id, space_id, origin_agent, accepted, rejected_conflict)
        VALUES (?, ?, ?, ?, ?)
        """,
        (report.envelope_id, space_id, origin_agent, report.accepted, report.rejected_conflict),
    )


def record_maintenance(
    conn: sqlite3.Connection,
    space_id: str,
    pass_name: str,
    generation: int,
    report: dict[str, Any],
    *,
    dry_run: bool = False,
) -> None:
    conn.execute(
        """
        INSERT INTO maintenance_events (space_id, pass, generation, dry_run, report)
        VALUES (?, ?, ?, ?, ?)
        """,
        (space_id, pass_name, generation, dry_run, json.dumps(report, sort_keys=True, default=str)),
    )


def maintenance_events(conn: sqlite3.Connection, space_id: str, limit: int = 50) -> list[dict[str, Any]]:
    rows = conn.execute(
        """
        SELECT pass, generation, dry_run, report, created_at
        FROM maintenance_events
        WHERE space_id = ?
        ORDER BY id DESC
        LIMIT ?
        """,
        (space_id, limit),
    ).fetchall()
    return [
        {
            "pass": pass_name,
            "generation": generation,
            "dry_run": bool(dry_run),
            "report": json.loads(report),
            "created_at": created_at,
        }
        for pass_name, generation, dry_run, report, created_at in rows
    ]
