"""Health check service for monitoring system status."""

import logging
import shutil
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Dict

from app import __version__
from app.config import settings
from app.database.connection import get_db
from app.database.schema import verify_schema

logger = logging.getLogger(__name__)

_app_start_time = time.time()
DISK_WARNING_PERCENT = 90


class HealthService:
    """Database, disk and uptime checks plus per-space generation counters."""

    def check_database(self) -> Dict[str, Any]:
        try:
            with get_db().get_read_connection() as conn:
                conn.execute("SELECT 1").fetchone()
            if not verify_schema(settings.database_path):
                return {"status": "unhealthy", "message": "Schema incomplete", "connected": True}
            return {"status": "healthy", "message": "Database connection successful", "connected": True}
        except Exception as e:
            logger.error("Database health check error: %s", e)
            return {"status": "unhealthy", "message": f"Database error: {e}", "connected": False}

    def check_disk_space(self) -> Dict[str, Any]:
        try:
            db_path = Path(settings.database_path).parent
            usage = shutil.disk_usage(db_path)
            percent_used = usage.used / usage.total * 100
            return {
                "status": "healthy" if percent_used < DISK_WARNING_PERCENT else "warning",
                "path": str(db_path),
                "free_gb": round(usage.free / (1024**3), 2),
                "percent_used": round(percent_used, 2),
            }
        except OSError as e:
            logger.error("Disk space check error: %s", e)
            return {"status": "error", "message": f"Failed to check disk space: {e}"}

    def get_uptime(self) -> Dict[str, Any]:
        uptime_seconds = int(time.time() - _app_start_time)
        delta = timedelta(seconds=uptime_seconds)
        hours, remainder = divmod(delta.seconds, 3600)
        minutes, seconds = divmod(remainder, 60)
        return {
            "status": "healthy",
            "started_at": datetime.fromtimestamp(_app_start_time, tz=timezone.utc).isoformat(),
            "uptime_seconds": uptime_seconds,
            "uptime_formatted": f"{delta.days}d {hours}h {minutes}m {seconds}s",
        }

    def get_full_health_status(self, generations: Dict[str, int]) -> Dict[str, Any]:
        """
        Combined status; ``ok`` unless the database check fails.

        Args:
            generations: Reflection generation per memory space
        """
        database = self.check_database()
        disk = self.check_disk_space()
        uptime = self.get_uptime()
        healthy = database["status"] == "healthy" and disk["status"] in ("healthy", "warning")
        return {
            "status": "ok" if healthy else "degraded",
            "version": __version__,
            "generation": generations,
            "checks": {"database": database, "disk_space": disk, "uptime": uptime},
        }


_health_service: HealthService | None = None


def get_health_service() -> HealthService:
    """Get the global health service instance."""
    global _health_service
    if _health_service is None:
        _health_service = HealthService()
    return _health_service
