"""Database package: SQLite connection, schema, per-space write queues and the memory log."""

from app.database.connection import DatabaseConnection, close_db, get_db
from app.database.migrations import MigrationManager, run_initial_migration
from app.database.schema import init_database
from app.database.write_queue import WriteQueue, close_write_queues, get_write_queue

__all__ = [
    "DatabaseConnection",
    "get_db",
    "close_db",
    "init_database",
    "WriteQueue",
    "get_write_queue",
    "close_write_queues",
    "MigrationManager",
    "run_initial_migration",
]
