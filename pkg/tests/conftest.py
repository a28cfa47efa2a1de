"""Pytest configuration and fixtures."""

from collections.abc import Callable

import pytest
from fastapi.testclient import TestClient

from app.config import clear_settings_cache, get_settings
from app.database import connection as db_connection
from app.database import write_queue
from app.models.activation import ActivationTrace
from app.models.api import IngestReceipt, IngestRequest
from app.models.memory import MemoryUnit, Relation, UnitKind
from app.services.annotation_service import RuleAnnotator, get_default_annotator
from app.services.audit_service import reset_audit_service
from app.services.graph_store import MemoryStore
from app.services.memory_service import MemoryService, ingest_utterance, reset_memory_service

T0 = 1_700_000_000


def _reset_globals() -> None:
    db_connection.close_db()
    write_queue._write_queues.clear()
    reset_memory_service()
    reset_audit_service()
    clear_settings_cache()


@pytest.fixture
def anyio_backend():
    """Use a single AnyIO backend to avoid duplicate test runs."""
    return "asyncio"


@pytest.fixture
def test_db(tmp_path, monkeypatch):
    """Point the application at a fresh SQLite database and log file."""
    db_path = tmp_path / "memory.sqlite3"
    monkeypatch.setenv("DATABASE_PATH", str(db_path))
    monkeypatch.setenv("LOG_FILE", str(tmp_path / "logs" / "maintenance.log"))
    monkeypatch.setenv("MEMORY_CONFIG_FILE", str(tmp_path / "absent.toml"))
    monkeypatch.setenv("APP_ENV", "testing")
    _reset_globals()
    get_settings()

    yield str(db_path)

    _reset_globals()


@pytest.fixture
async def service(test_db):
    """A started MemoryService on the test database with a fixed clock."""
    memory = MemoryService(clock=lambda: T0)
    await memory.start()
    yield memory
    await memory.close()


@pytest.fixture
def client(test_db):
    """TestClient with the application lifespan running."""
    from app.main import app

    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture(scope="session")
def annotator() -> RuleAnnotator:
    return get_default_annotator()


@pytest.fixture
def store() -> MemoryStore:
    return MemoryStore("test")


@pytest.fixture
def remember(annotator) -> Callable[..., IngestReceipt]:
    """Ingest one utterance into an in-memory store, as the service does."""

    def _remember(
        store: MemoryStore,
        utterance: str,
        ts: int,
        speaker: str = "user",
        *,
        tags: tuple[str, ...] = (),
        dialogue: str = "default",
    ) -> IngestReceipt:
        request = IngestRequest(utterance=utterance, speaker=speaker, ts=ts, dialogue=dialogue, tags=tags)
        return ingest_utterance(store, request, annotator)

    return _remember


@pytest.fixture
def make_unit() -> Callable[..., MemoryUnit]:
    """Build an un-stored Fact unit for ``store`` directly, bypassing annotation."""

    def _make_unit(
        store: MemoryStore,
        content: str,
        ts: int = T0,
        *,
        kind: UnitKind = UnitKind.FACT,
        fact_key: str | None = None,
        tags: tuple[str, ...] = (),
        emotion: float = 0.0,
        provenance: tuple[str, ...] | None = None,
        relation: Relation | None = None,
    ) -> MemoryUnit:
        return MemoryUnit(
            space_id=store.space_id,
            kind=kind,
            content=content,
            fact_key=fact_key if fact_key is not None else (content if kind is UnitKind.FACT else None),
            relation=relation,
            embedding=store.embedder.embed(content),
            created_at=ts,
            trace=ActivationTrace.created(ts),
            emotion_weight=emotion,
            preference_tags=tags,
            provenance=provenance or (f"src:{content}",),
        )

    return _make_unit
