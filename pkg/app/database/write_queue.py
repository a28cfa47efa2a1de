"""Per-space async write queues: the single writer of each memory space."""

from __future__ import annotations

import asyncio
import logging
import sqlite3
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Callable, Optional

from app.config import settings
from app.database.connection import create_connection

logger = logging.getLogger(__name__)

CHECKPOINT_TRANSACTIONS = 1000


@dataclass
class WriteOperation:
    """A queued transactional callable."""

    description: str
    connection_callable: Callable[[sqlite3.Connection], Any]
    callback: Optional[Callable[[Any], None]] = None
    error_callback: Optional[Callable[[Exception], None]] = None
    completion_future: Optional[asyncio.Future] = None
    expired: bool = False
    execution_started: bool = False

    def mark_expired(self) -> None:
        self.expired = True

    def mark_execution_started(self) -> None:
        self.execution_started = True

    def should_skip_execution(self) -> bool:
        return self.expired and not self.execution_started


class WriteQueue:
    """
    Serialize the writes of one key (a memory space) through one async worker.

    Each operation runs inside ``BEGIN``/``COMMIT`` on the worker's connection.
    ``callback`` runs after the commit and before the caller resumes, so an
    in-memory swap done there is visible to the next queued operation.
    """

    def __init__(self, db_path: str, key: str = "default", checkpoint_interval: int = 300):
        self.db_path = db_path
        self.key = key
        self.checkpoint_interval = checkpoint_interval
        self.queue: asyncio.Queue[WriteOperation] = asyncio.Queue()
        self._loop: asyncio.AbstractEventLoop | None = None
        self.worker_task: Optional[asyncio.Task] = None
        self.is_running = False
        self.transaction_count = 0
        self.last_checkpoint = datetime.now()
        self.result_timeout_seconds = float(settings.write_queue_result_timeout)

    async def start(self) -> None:
        """Start the worker if it is not already running."""
        self._ensure_queue_for_current_loop()

        if self.worker_task and self.worker_task.done():
            self.is_running = False
            self.worker_task = None

        if self.is_running and self.worker_task:
            logger.warning("Write queue %s is already running", self.key)
            return

        self.is_running = True
        self.worker_task = asyncio.create_task(self._worker())
        logger.debug("Write queue %s started", self.key)

    async def stop(self) -> None:
        """Drain outstanding work and stop the worker."""
        if not self.is_running:
            return
        if self._loop is not asyncio.get_running_loop():
            self.is_running = False
            self.worker_task = None
            return

        await self.queue.join()
        self.is_running = False
        if self.worker_task:
            self.worker_task.cancel()
            try:
                await self.worker_task
            except asyncio.CancelledError:
                pass
            finally:
                self.worker_task = None
        logger.debug("Write queue %s stopped", self.key)

    async def execute_with_connection(
        self,
        description: str,
        operation_callable: Callable[[sqlite3.Connection], Any],
        return_result: bool = True,
        *,
        callback: Optional[Callable[[Any], None]] = None,
        error_callback: Optional[Callable[[Exception], None]] = None,
    ) -> Any:
        """Run ``operation_callable(conn)`` in a transaction on the worker and await it."""
        self._ensure_queue_for_current_loop()

        if (not self.is_running) or (self.worker_task and self.worker_task.done()):
            await self.start()

        completion_future = asyncio.get_running_loop().create_future()
        operation = WriteOperation(
            description=description,
            connection_callable=operation_callable,
            callback=callback,
            error_callback=error_callback,
            completion_future=completion_future,
        )
        await self.queue.put(operation)

        try:
            value = await asyncio.wait_for(
                asyncio.shield(completion_future),
                timeout=self.result_timeout_seconds,
            )
        except asyncio.TimeoutError as exc:
            operation.mark_expired()
            logger.error(
                "Write queue %s timed out after %ss; op=%s",
                self.key,
                self.result_timeout_seconds,
                description,
            )
            raise TimeoutError(
                f"Timed out waiting for write queue {self.key} after {self.result_timeout_seconds}s"
            ) from exc
        return value if return_result else None

    async def execute(self, query: str, params: tuple[Any, ...] | None = None) -> None:
        """Queue one SQL statement."""
        await self.execute_with_connection(
            " ".join(query.split())[:80],
            lambda conn: conn.execute(query, params or ()),
            return_result=False,
        )

    def _ensure_queue_for_current_loop(self) -> None:
        """Rebind to the running loop; a worker left on a previous loop is abandoned."""
        current_loop = asyncio.get_running_loop()
        if self._loop is None:
            self._loop = current_loop
            return
        if self._loop is current_loop:
            return

        old_queue = self.queue
        self.queue = asyncio.Queue()
        moved = 0
        while True:
            try:
                self.queue.put_nowait(old_queue.get_nowait())
                moved += 1
            except asyncio.QueueEmpty:
                break
        logger.warning(
            "Write queue %s event loop changed; rebound queue (moved_ops=%s)",
            self.key,
            moved,
        )
        self._loop = current_loop
        self.worker_task = None
        self.is_running = False

    @staticmethod
    def _resolve(future: asyncio.Future | None, value: Any = None, exc: Exception | None = None) -> None:
        if future is None or future.done():
            return
        if exc is not None:
            future.set_exception(exc)
        else:
            future.set_result(value)

    async def _worker(self) -> None:
        conn = create_connection(self.db_path)
        try:
            while self.is_running:
                try:
                    operation = await asyncio.wait_for(self.queue.get(), timeout=1.0)
                except asyncio.TimeoutError:
                    self._check_checkpoint(conn)
                    continue

                try:
                    if operation.should_skip_execution():
                        logger.warning("Skipping expired write op=%s", operation.description)
                        self._resolve(
                            operation.completion_future,
                            exc=TimeoutError("Write operation expired before execution started"),
                        )
                        continue

                    operation.mark_execution_started()
                    conn.execute("BEGIN")
                    raw_result = operation.connection_callable(conn)
                    conn.commit()
                    self.transaction_count += 1

                    if operation.callback:
                        operation.callback(raw_result)
                    self._resolve(operation.completion_future, raw_result)

                except Exception as exc:
                    logger.error(
                        "Write op failed on %s: op=%s error=%s",
                        self.key,
                        operation.description,
                        exc,
                    )
                    try:
                        conn.rollback()
                    except sqlite3.Error as rollback_error:
                        logger.warning("Rollback skipped/failed: %s", rollback_error)
                    if operation.error_callback:
                        operation.error_callback(exc)
                    self._resolve(operation.completion_future, exc=exc)
                finally:
                    self.queue.task_done()

                self._check_checkpoint(conn)
        finally:
            self.is_running = False
            conn.close()

    def _check_checkpoint(self, conn: sqlite3.Connection) -> None:
        """Checkpoint the SQLite WAL periodically."""
        now = datetime.now()
        elapsed = (now - self.last_checkpoint).total_seconds()
        if self.transaction_count >= CHECKPOINT_TRANSACTIONS or elapsed >= self.checkpoint_interval:
            try:
                conn.execute("PRAGMA wal_checkpoint(PASSIVE)")
                self.transaction_count = 0
                self.last_checkpoint = now
                logger.debug("Database checkpoint completed")
            except sqlite3.Error as exc:
                logger.error("Error during checkpoint: %s", exc)


_write_queues: dict[str, WriteQueue] = {}


async def get_write_queue(key: str = "default") -> WriteQueue:
    """Return the write queue for ``key`` (usually a space id), started."""
    queue = _write_queues.get(key)
    if queue is None:
        queue = WriteQueue(settings.database_path, key, settings.database_checkpoint_interval)
        _write_queues[key] = queue
    if not queue.is_running or queue._loop is not asyncio.get_running_loop():
        await queue.start()
    return queue


async def close_write_queues() -> None:
    """Stop every write queue."""
    queues = list(_write_queues.values())
    _write_queues.clear()
    for queue in queues:
        await queue.stop()
