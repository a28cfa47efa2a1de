"""Audit trail of maintenance passes and hub exchanges."""

import json
import logging
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List

from app.config import settings
from app.database.connection import get_db
from app.database.repository import maintenance_events

AUDIT_LOGGER = "audit"


class AuditService:
    """
    One line per maintenance pass or hub exchange in a weekly rotated file.

    The database copy of each maintenance report is written by the caller in the
    same transaction as the mutation it describes; this service owns the file
    trail and reads the table back.
    """

    def __init__(self, log_file: str | None = None):
        self.log_file = log_file or settings.log_file
        self._setup_file_logger()

    def _setup_file_logger(self) -> None:
        Path(self.log_file).parent.mkdir(parents=True, exist_ok=True)

        self.logger = logging.getLogger(AUDIT_LOGGER)
        self.logger.setLevel(logging.INFO)
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers.clear()

        handler = TimedRotatingFileHandler(
            filename=self.log_file,
            when="W0",
            interval=1,
            backupCount=52,
            encoding="utf-8",
        )
        handler.setFormatter(
            logging.Formatter(
                "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
        self.logger.addHandler(handler)
        self.logger.propagate = False

    def log_maintenance(
        self,
        space_id: str,
        pass_name: str,
        generation: int,
        report: Dict[str, Any],
        *,
        dry_run: bool = False,
    ) -> None:
        message = f"MAINTENANCE: {pass_name} | space={space_id} | generation={generation}"
        if dry_run:
            message += " | dry_run=true"
        message += f" | report={json.dumps(report, sort_keys=True, default=str)}"
        self.logger.info(message)

    def log_hub_event(self, action: str, **details: Any) -> None:
        """Registration, share and apply events of the hub."""
        parts = [f"HUB: {action}"]
        parts += [f"{key}={value}" for key, value in sorted(details.items())]
        self.logger.info(" | ".join(parts))

    def log_data_event(self, action: str, space_id: str, **details: Any) -> None:
        """Export, import, compaction and purge."""
        parts = [f"DATA: {action}", f"space={space_id}"]
        parts += [f"{key}={value}" for key, value in sorted(details.items())]
        self.logger.info(" | ".join(parts))

    def recent_events(self, space_id: str, limit: int = 50) -> List[Dict[str, Any]]:
        with get_db().get_read_connection() as conn:
            return maintenance_events(conn, space_id, limit)

    def close(self) -> None:
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers.clear()


_audit_service: AuditService | None = None


def get_audit_service() -> AuditService:
    """Get the global audit service instance."""
    global _audit_service
    if _audit_service is None:
        _audit_service = AuditService()
    return _audit_service


def reset_audit_service() -> None:
    global _audit_service
    if _audit_service is not None:
        _audit_service.close()
    _audit_service = None
