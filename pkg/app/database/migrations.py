"""Database migration and initialization helpers."""

from __future__ import annotations

import logging
from pathlib import Path

from app.config import settings
from app.database.connection import create_connection
from app.database.schema import SCHEMA_VERSION, init_database, verify_schema
from app.errors import VersionUnsupported

logger = logging.getLogger(__name__)


class MigrationManager:
    """Create the schema and track its version in ``PRAGMA user_version``."""

    def __init__(self, db_path: str):
        self.db_path = db_path

    def schema_version(self) -> int:
        conn = create_connection(self.db_path)
        try:
            return conn.execute("PRAGMA user_version").fetchone()[0]
        finally:
            conn.close()

    def run_migrations(self) -> None:
        """Ensure the SQLite database exists and matches the current schema."""
        if not Path(self.db_path).exists():
            logger.info("Database does not exist, creating new database")
        else:
            logger.info("Database exists, applying schema updates if needed")

        current = self.schema_version() if Path(self.db_path).exists() else 0
        if current > SCHEMA_VERSION:
            raise VersionUnsupported(
                f"database schema {current} is newer than supported {SCHEMA_VERSION}"
            )

        init_database(self.db_path)
        if not verify_schema(self.db_path):
            raise RuntimeError(f"Schema verification failed for database: {self.db_path}")

        if current < SCHEMA_VERSION:
            conn = create_connection(self.db_path)
            try:
                conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
            finally:
                conn.close()
            logger.info("Schema version %d -> %d", current, SCHEMA_VERSION)

    def reset_database(self) -> None:
        """Delete the SQLite database files and recreate the schema."""
        logger.warning("Resetting database - all memory spaces will be lost!")

        db_file = Path(self.db_path)
        for path in (db_file, db_file.with_name(db_file.name + "-wal"), db_file.with_name(db_file.name + "-shm")):
            if path.exists():
                path.unlink()

        self.run_migrations()
        logger.info("Database reset complete")


def run_initial_migration() -> MigrationManager:
    """Initialize the configured database."""
    manager = MigrationManager(settings.database_path)
    manager.run_migrations()
    return manager
