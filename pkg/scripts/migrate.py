"""Database maintenance script: create, verify or reset the memory database."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config import settings
from app.database.migrations import MigrationManager
from app.database.schema import SCHEMA_VERSION, verify_schema
from app.errors import MemoryEngineError


def setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Database tool for the memory engine")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("init", help="Create the schema (safe to repeat)")
    subparsers.add_parser("verify", help="Check tables and schema version")
    reset_parser = subparsers.add_parser("reset", help="Delete every memory space and recreate the schema")
    reset_parser.add_argument("--confirm", action="store_true", help="Confirm database reset")

    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    manager = MigrationManager(settings.database_path)

    try:
        if args.command == "init":
            manager.run_migrations()
            print(f"Database ready at {settings.database_path} (schema {SCHEMA_VERSION})")
            return 0

        if args.command == "verify":
            version = manager.schema_version()
            if verify_schema(settings.database_path) and version == SCHEMA_VERSION:
                print(f"Schema {version} verified")
                return 0
            print(f"Schema check failed: version {version}, expected {SCHEMA_VERSION}")
            return 1

        if not args.confirm:
            print("Reset deletes all memory spaces; pass --confirm")
            return 1
        manager.reset_database()
        print("Database reset complete")
        return 0
    except MemoryEngineError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
