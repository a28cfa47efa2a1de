"""Database schema definitions and initialization."""

from __future__ import annotations

from pathlib import Path

from app.database.connection import create_connection

SCHEMA_VERSION = 1

SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS spaces (
    space_id TEXT PRIMARY KEY NOT NULL,
    generation INTEGER NOT NULL DEFAULT 0,
    store_version INTEGER NOT NULL DEFAULT 0,
    record_count INTEGER NOT NULL DEFAULT 0,
    created_at TIMESTAMP NOT NULL DEFAULT CURRENT_TIMESTAMP,
    updated_at TIMESTAMP NOT NULL DEFAULT CURRENT_TIMESTAMP
);

CREATE TABLE IF NOT EXISTS memory_log (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    space_id TEXT NOT NULL,
    record_kind TEXT NOT NULL CHECK (
        record_kind IN ('meta', 'utterance', 'unit', 'unit_alias', 'node', 'node_alias', 'edge')
    ),
    record_id TEXT NOT NULL,
    payload TEXT,
    logged_at TIMESTAMP NOT NULL DEFAULT CURRENT_TIMESTAMP,
    FOREIGN KEY (space_id) REFERENCES spaces(space_id)
);

CREATE TABLE IF NOT EXISTS hub_agents (
    agent_id TEXT PRIMARY KEY NOT NULL,
    space_id TEXT NOT NULL,
    profile TEXT NOT NULL,
    created_at TIMESTAMP NOT NULL DEFAULT CURRENT_TIMESTAMP
);

CREATE TABLE IF NOT EXISTS applied_envelopes (
    envelope_id TEXT NOT NULL,
    space_id TEXT NOT NULL,
    origin_agent TEXT NOT NULL,
    accepted INTEGER NOT NULL DEFAULT 0,
    rejected_conflict INTEGER NOT NULL DEFAULT 0,
    applied_at TIMESTAMP NOT NULL DEFAULT CURRENT_TIMESTAMP,
    PRIMARY KEY (envelope_id, space_id)
);

CREATE TABLE IF NOT EXISTS maintenance_events (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    space_id TEXT NOT NULL,
    pass TEXT NOT NULL,
    generation INTEGER NOT NULL,
    dry_run BOOLEAN NOT NULL DEFAULT 0,
    report TEXT NOT NULL,
    created_at TIMESTAMP NOT NULL DEFAULT CURRENT_TIMESTAMP
);

CREATE INDEX IF NOT EXISTS idx_memory_log_space ON memory_log(space_id, seq);
CREATE INDEX IF NOT EXISTS idx_memory_log_record ON memory_log(space_id, record_kind, record_id);
CREATE INDEX IF NOT EXISTS idx_hub_agents_space ON hub_agents(space_id);
CREATE INDEX IF NOT EXISTS idx_maintenance_events_space ON maintenance_events(space_id, created_at);
"""

REQUIRED_TABLES = frozenset(
    {"spaces", "memory_log", "hub_agents", "applied_envelopes", "maintenance_events"}
)


def init_database(db_path: str) -> None:
    """Initialize the database with the current schema."""
    Path(db_path).parent.mkdir(parents=True, exist_ok=True)

    conn = create_connection(db_path)
    try:
        conn.executescript(SCHEMA_SQL)
    finally:
        conn.close()


def verify_schema(db_path: str) -> bool:
    """Return True when the required tables exist."""
    conn = create_connection(db_path)
    try:
        rows = conn.execute(
            """
            SELECT name
            FROM sqlite_master
            WHERE type = 'table' AND name NOT LIKE 'sqlite_%'
            """
        ).fetchall()
        return REQUIRED_TABLES.issubset({row[0] for row in rows})
    finally:
        conn.close()
