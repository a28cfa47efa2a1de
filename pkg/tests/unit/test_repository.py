"""Tests for the SQLite schema, migrations, connections and repository helpers."""

import importlib.util
import threading
from pathlib import Path

import pytest

from app.database import repository
from app.database.connection import DatabaseConnection, create_connection
from app.database.migrations import MigrationManager
from app.database.schema import SCHEMA_VERSION, verify_schema
from app.errors import VersionUnsupported
from app.models.hub import AgentProfile, ApplyReport
from app.models.records import LogRecord


@pytest.fixture
def migrated(test_db) -> str:
    MigrationManager(test_db).run_migrations()
    return test_db


@pytest.fixture
def conn(migrated):
    connection = create_connection(migrated)
    yield connection
    connection.close()


def unit_record(record_id: str, content: str) -> LogRecord:
    return LogRecord(kind="unit", record_id=record_id, payload={"content": content})


class TestMigrations:
    def test_fresh_database_gets_current_version(self, test_db):
        manager = MigrationManager(test_db)
        manager.run_migrations()

        assert manager.schema_version() == SCHEMA_VERSION
        assert verify_schema(test_db)

    def test_running_twice_is_harmless(self, migrated):
        MigrationManager(migrated).run_migrations()

        assert MigrationManager(migrated).schema_version() == SCHEMA_VERSION

    def test_newer_database_is_refused(self, migrated):
        connection = create_connection(migrated)
        connection.execute(f"PRAGMA user_version = {SCHEMA_VERSION + 1}")
        connection.close()

        with pytest.raises(VersionUnsupported):
            MigrationManager(migrated).run_migrations()

    def test_reset_drops_spaces(self, conn, migrated):
        repository.ensure_space(conn, "alice")

        MigrationManager(migrated).reset_database()

        fresh = create_connection(migrated)
        try:
            assert repository.list_spaces(fresh) == []
        finally:
            fresh.close()


class TestSpacesAndLog:
    def test_ensure_space_reports_creation(self, conn):
        assert repository.ensure_space(conn, "alice") is True
        assert repository.ensure_space(conn, "alice") is False
        assert repository.space_exists(conn, "alice")
        assert not repository.space_exists(conn, "bob")

    def test_records_load_in_append_order(self, conn):
        repository.ensure_space(conn, "alice")
        records = [
            unit_record("u000002", "second"),
            unit_record("u000001", "first"),
            LogRecord(kind="unit", record_id="u000002", payload=None),
        ]

        assert repository.append_records(conn, "alice", records) == 3

        assert repository.load_space_records(conn, "alice") == records
        assert repository.load_space_records(conn, "bob") == []

    def test_meta_update_counts_records(self, conn):
        repository.ensure_space(conn, "alice")
        repository.update_space_meta(conn, "alice", generation=2, store_version=7, added_records=3)
        repository.update_space_meta(conn, "alice", generation=3, store_version=9, added_records=1)

        (row,) = repository.list_spaces(conn)
        assert (row["generation"], row["store_version"], row["record_count"]) == (3, 9, 4)

    def test_compact_replaces_log(self, conn):
        repository.ensure_space(conn, "alice")
        repository.append_records(
            conn, "alice", [unit_record("u000001", "draft"), unit_record("u000001", "final")]
        )

        before, after = repository.compact_space(conn, "alice", [unit_record("u000001", "final")])

        assert (before, after) == (2, 1)
        assert repository.load_space_records(conn, "alice") == [unit_record("u000001", "final")]
        assert repository.list_spaces(conn)[0]["record_count"] == 1


class TestAgentsAndEvents:
    def test_agents_round_trip_sorted(self, conn):
        for agent_id in ("support", "billing"):
            repository.save_agent(
                conn,
                AgentProfile(agent_id=agent_id, responsibility_domain=(agent_id,), space_id=f"{agent_id}-space"),
            )

        assert [a.agent_id for a in repository.load_agents(conn)] == ["billing", "support"]

    def test_envelope_is_recorded_once(self, conn):
        report = ApplyReport(envelope_id="e1", accepted=2)
        repository.record_envelope(conn, "support", "billing", report)
        repository.record_envelope(conn, "support", "billing", report)

        count = conn.execute("SELECT COUNT(*) FROM applied_envelopes").fetchone()[0]
        assert count == 1

    def test_maintenance_events_newest_first(self, conn):
        repository.record_maintenance(conn, "alice", "prune", 0, {"units_removed": 1})
        repository.record_maintenance(conn, "alice", "reflect", 1, {"mutations": 2}, dry_run=True)

        events = repository.maintenance_events(conn, "alice")

        assert [(e["pass"], e["generation"], e["dry_run"]) for e in events] == [
            ("reflect", 1, True),
            ("prune", 0, False),
        ]
        assert events[1]["report"] == {"units_removed": 1}
        assert repository.maintenance_events(conn, "alice", limit=1)[0]["pass"] == "reflect"


class TestDatabaseConnection:
    """Thread-local read connections."""

    def test_read_connection_is_reused(self, migrated):
        db = DatabaseConnection(migrated)
        with db.get_read_connection() as first, db.get_read_connection() as second:
            assert first is second
        db.close()

    def test_close_drops_read_connection(self, migrated):
        db = DatabaseConnection(migrated)
        with db.get_read_connection():
            pass

        db.close()

        assert db._local.read_connection is None
        with db.get_read_connection() as conn:
            assert conn.execute("SELECT 1").fetchone() == (1,)
        db.close()

    def test_one_read_connection_per_thread(self, migrated):
        db = DatabaseConnection(migrated)
        seen: list[object] = []

        def worker() -> None:
            with db.get_read_connection() as conn:
                seen.append(conn)
            db.close()

        with db.get_read_connection() as main_conn:
            thread = threading.Thread(target=worker)
            thread.start()
            thread.join()

        assert len(seen) == 1
        assert seen[0] is not main_conn
        db.close()

    def test_write_connection_rolls_back_on_error(self, migrated):
        db = DatabaseConnection(migrated)

        with pytest.raises(RuntimeError):
            with db.get_write_connection() as conn:
                repository.ensure_space(conn, "alice")
                raise RuntimeError("abort")

        with db.get_read_connection() as conn:
            assert not repository.space_exists(conn, "alice")
        db.close()


def load_migrate_script():
    path = Path(__file__).resolve().parents[2] / "scripts" / "migrate.py"
    spec = importlib.util.spec_from_file_location("migrate_script", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class TestMigrateScript:
    def test_init_then_verify(self, test_db, capsys):
        script = load_migrate_script()

        assert script.main(["init"]) == 0
        assert script.main(["verify"]) == 0
        assert "verified" in capsys.readouterr().out

    def test_reset_needs_confirm(self, migrated):
        script = load_migrate_script()

        assert script.main(["reset"]) == 1
        assert script.main(["reset", "--confirm"]) == 0
