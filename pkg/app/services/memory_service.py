"""Memory spaces as a service: ingestion, retrieval, maintenance, sharing and durability.

Every mutation of a space runs on that space's write queue. The queued callable
mutates the store, drains its change records into ``memory_log`` and commits in
one SQLite transaction; the in-memory store is swapped in only after the commit.
"""

from __future__ import annotations

import logging
import sqlite3
import time
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

from app.config import Settings, get_settings
from app.database import repository
from app.database.connection import get_db
from app.database.migrations import MigrationManager
from app.database.snapshot import read_snapshot, write_snapshot
from app.database.write_queue import close_write_queues, get_write_queue
from app.errors import EmptySelection, PurgeRefused, SpaceUnknown
from app.models.api import (
    CompactResponse,
    IngestReceipt,
    IngestRequest,
    MaintainRequest,
    MaintainResponse,
    MaintenancePass,
    QueryHit,
    QueryRequest,
    QueryResponse,
    SpaceProfile,
    SpaceStats,
    UnitView,
)
from app.models.hub import AgentProfile, ApplyReport, RouteRequest, SharePermission, ShareEnvelope
from app.models.memory import LifecycleState, UnitKind
from app.services import forget_service
from app.services.activation_service import unit_retention
from app.services.annotation_service import Annotator, build_annotator, generate_units, make_turn_unit
from app.services.audit_service import get_audit_service
from app.services.graph_store import MemoryStore
from app.services.hub_service import HubService, apply_shared, summarize_for_share, transmit
from app.services.prune_service import PruneConfig, live_tokens, prune
from app.services.reflection_service import (
    CONFLICT_FLAG,
    ReflectionConfig,
    read_feedback,
    run_reflection_cycle,
)
from app.services.retrieval_service import retrieve_topk
from app.utils.embedding import EmbeddingProvider, get_embedder

logger = logging.getLogger(__name__)

T = TypeVar("T")
Mutation = Callable[[MemoryStore], tuple[MemoryStore, T]]
AfterCommit = Callable[[sqlite3.Connection, MemoryStore, Any], None]

HUB_QUEUE = "__hub__"
PREFERENCE_PREFIX = "pref:"


def ingest_utterance(
    store: MemoryStore,
    request: IngestRequest,
    annotator: Annotator,
    context_window: int = 5,
) -> IngestReceipt:
    """
    Annotate one utterance against its dialogue context and upsert its units.

    An utterance without facts is kept as a single Turn unit.
    """
    turns = store.dialogue_turns(request.dialogue)
    context = [u.text for u in turns[-context_window:]] if context_window else []
    anchors = annotator.annotate(request.utterance, context, request.speaker)
    utterance = store.add_utterance(
        request.utterance,
        request.speaker,
        request.ts,
        dialogue=request.dialogue,
        act=str(anchors.dialogue_act),
    )
    units = generate_units(
        anchors,
        request.utterance,
        request.ts,
        store.space_id,
        utterance_id=utterance.id,
        speaker=request.speaker,
        tags=request.tags,
        embedder=store.embedder,
        functional_relations=store.functional_relations,
    )
    fact_ids = [store.upsert_unit(unit) for unit in units]
    unit_ids = list(fact_ids)
    if not units:
        turn = make_turn_unit(
            anchors,
            request.utterance,
            request.ts,
            store.space_id,
            utterance_id=utterance.id,
            speaker=request.speaker,
            embedder=store.embedder,
        )
        unit_ids.append(store.upsert_unit(turn))
    store.set_utterance(utterance.model_copy(update={"unit_ids": tuple(unit_ids)}))
    return IngestReceipt(
        space_id=store.space_id,
        utterance_id=utterance.id,
        unit_ids=unit_ids,
        fact_unit_ids=fact_ids,
        anchors=anchors,
    )


class MemoryService:
    """All memory spaces of one database."""

    def __init__(
        self,
        settings: Settings | None = None,
        *,
        annotator: Annotator | None = None,
        embedder: EmbeddingProvider | None = None,
        clock: Callable[[], int] | None = None,
    ):
        self.settings = settings or get_settings()
        self.annotator = annotator or build_annotator(self.settings)
        self.embedder = embedder or get_embedder(self.settings.memory.embedding_dim)
        self.clock = clock or (lambda: int(time.time()))
        self.hub = HubService()
        self._spaces: dict[str, MemoryStore] = {}
        self._started = False

    # ------------------------------------------------------------ lifecycle

    async def start(self) -> None:
        if self._started:
            return
        MigrationManager(self.settings.database_path).run_migrations()
        with get_db().get_read_connection() as conn:
            self.hub.load(repository.load_agents(conn))
        self._started = True
        logger.info("Memory service started (%d agent(s))", len(self.hub.agents()))

    async def close(self) -> None:
        await close_write_queues()
        self._spaces.clear()
        self._started = False

    def now(self, now: int | None = None) -> int:
        return self.clock() if now is None else now

    # --------------------------------------------------------------- stores

    def _new_store(self, space_id: str, records=()) -> MemoryStore:
        return MemoryStore.from_records(
            records,
            space_id=space_id,
            functional_relations=self.settings.memory.functional_relations,
            embedder=self.embedder,
            params=self.settings.activation,
        )

    def _load(self, conn: sqlite3.Connection, space_id: str) -> MemoryStore:
        if not repository.space_exists(conn, space_id):
            raise SpaceUnknown(f"unknown memory space {space_id!r}")
        store = self._new_store(space_id, repository.load_space_records(conn, space_id))
        logger.info("Loaded space %s: %d unit(s), generation %d", space_id, len(store), store.generation)
        return store

    async def get_store(self, space_id: str) -> MemoryStore:
        """The current store of a space, for reads."""
        store = self._spaces.get(space_id)
        if store is None:
            with get_db().get_read_connection() as conn:
                store = self._load(conn, space_id)
            self._spaces[space_id] = store
        return store

    def evict(self, space_id: str) -> None:
        self._spaces.pop(space_id, None)

    async def _commit(
        self,
        space_id: str,
        description: str,
        mutate: Mutation[T],
        *,
        isolated: bool = False,
        create: bool = False,
        after: AfterCommit | None = None,
    ) -> T:
        """
        Run ``mutate`` as the single writer of ``space_id`` and persist its changes.

        With ``isolated`` the mutation works on a clone, so a failure leaves the
        loaded store untouched; otherwise a failure evicts the store and the
        next access reloads it from the log.
        """

        def operation(conn: sqlite3.Connection) -> tuple[MemoryStore, T]:
            if create and repository.ensure_space(conn, space_id):
                logger.info("Created memory space %s", space_id)
            store = self._spaces.get(space_id)
            if store is None:
                store = self._load(conn, space_id)
            working = store.clone() if isolated else store
            working, result = mutate(working)
            records = working.drain_changes()
            if records:
                repository.append_records(conn, space_id, records)
            repository.update_space_meta(
                conn,
                space_id,
                generation=working.generation,
                store_version=working.version,
                added_records=len(records),
            )
            if after is not None:
                after(conn, working, result)
            return working, result

        def on_commit(raw: tuple[MemoryStore, T]) -> None:
            self._spaces[space_id] = raw[0]

        def on_error(exc: Exception) -> None:
            if not isolated:
                self._spaces.pop(space_id, None)

        queue = await get_write_queue(space_id)
        _, result = await queue.execute_with_connection(
            f"{description} [{space_id}]",
            operation,
            callback=on_commit,
            error_callback=on_error,
        )
        return result

    # --------------------------------------------------------------- ingest

    async def ingest(self, space_id: str, request: IngestRequest) -> IngestReceipt:
        """Record one utterance and remember the facts it states."""
        window = self.settings.memory.context_window
        return await self._commit(
            space_id,
            "ingest",
            lambda store: (store, ingest_utterance(store, request, self.annotator, window)),
            create=True,
        )

    async def ingest_many(self, space_id: str, requests: Iterable[IngestRequest]) -> list[IngestReceipt]:
        return [await self.ingest(space_id, request) for request in requests]

    # ---------------------------------------------------------------- query

    async def query(self, space_id: str, request: QueryRequest) -> QueryResponse:
        """Top-k retrieval; returned units record an access."""
        now = self.now(request.now)

        def mutate(store: MemoryStore) -> tuple[MemoryStore, QueryResponse]:
            hits = retrieve_topk(
                store,
                request.text,
                request.k,
                now,
                self.settings.weights,
                request.tags,
                self.settings.activation,
                self.annotator,
            )
            return store, QueryResponse(
                space_id=space_id,
                hits=[
                    QueryHit(unit=UnitView.of(h.unit), score=h.score, boost=h.boost, path=list(h.path))
                    for h in hits
                ],
                tokens_retrieved=sum(h.unit.token_count for h in hits),
            )

        await self.get_store(space_id)
        return await self._commit(space_id, "query", mutate)

    # ---------------------------------------------------------- maintenance

    def _feedback_path(self, space_id: str) -> Path | None:
        template = self.settings.memory.feedback_path
        return Path(template.format(space=space_id)) if template else None

    def _run_passes(
        self, store: MemoryStore, passes: list[MaintenancePass], now: int, dry_run: bool
    ) -> tuple[MemoryStore, MaintainResponse]:
        memory = self.settings.memory
        response = MaintainResponse(space_id=store.space_id, generation=store.generation, dry_run=dry_run)
        for name in passes:
            if name is MaintenancePass.PRUNE:
                response.prune = prune(store, now, PruneConfig.from_settings(self.settings))
            elif name is MaintenancePass.FORGET:
                response.forget = forget_service.sweep(
                    store,
                    now,
                    self.settings.activation,
                    memory.grace_seconds,
                    weaken_ceiling=memory.weaken_ceiling,
                    failed_strength=memory.failed_strength,
                )
                response.forget.dry_run = dry_run
            elif name is MaintenancePass.MERGE:
                actions = store.merge_similar_nodes(memory.node_merge_threshold)
                response.merge = [action.model_dump() for action in actions]
            elif name is MaintenancePass.REFLECT:
                feedback_path = self._feedback_path(store.space_id)
                feedback = read_feedback(feedback_path) if feedback_path else []
                store, response.reflect = run_reflection_cycle(
                    store, now, ReflectionConfig.from_settings(self.settings), feedback
                )
        response.generation = store.generation
        return store, response

    async def maintain(self, space_id: str, request: MaintainRequest) -> MaintainResponse:
        """
        Run maintenance passes in the requested order, atomically.

        A dry run works on a copy and writes nothing.
        """
        now = self.now(request.now)
        passes = list(request.passes)
        await self.get_store(space_id)

        if request.dry_run:
            store = (await self.get_store(space_id)).clone()
            _, response = self._run_passes(store, passes, now, dry_run=True)
            logger.info("Dry-run maintenance on %s: %s", space_id, ",".join(passes))
            return response

        def record(conn: sqlite3.Connection, store: MemoryStore, response: MaintainResponse) -> None:
            for name in passes:
                report = getattr(response, str(name))
                payload = report if isinstance(report, list) else report.model_dump(mode="json")
                repository.record_maintenance(conn, space_id, str(name), store.generation, {"report": payload})

        response = await self._commit(
            space_id,
            "maintain " + ",".join(passes),
            lambda store: self._run_passes(store, passes, now, dry_run=False),
            isolated=True,
            after=record,
        )

        audit = get_audit_service()
        for name in passes:
            report = getattr(response, str(name))
            payload = report if isinstance(report, list) else report.model_dump(mode="json")
            audit.log_maintenance(space_id, str(name), response.generation, {"report": payload})

        feedback_path = self._feedback_path(space_id)
        if MaintenancePass.REFLECT in passes and feedback_path and feedback_path.exists():
            feedback_path.rename(f"{feedback_path}.{response.generation}.applied")
        return response

    async def restore(self, space_id: str, unit_id: str, now: int | None = None) -> UnitView:
        when = self.now(now)
        await self.get_store(space_id)
        unit = await self._commit(
            space_id,
            f"restore {unit_id}",
            lambda store: (store, forget_service.restore(store, unit_id, when)),
        )
        return UnitView.of(unit)

    # ----------------------------------------------------------------- read

    async def stats(self, space_id: str) -> SpaceStats:
        store = await self.get_store(space_id)
        units = list(store.units.values())
        return SpaceStats(
            space_id=space_id,
            generation=store.generation,
            store_version=store.version,
            units_by_state=dict(sorted(Counter(str(u.state) for u in units).items())),
            units_by_kind=dict(sorted(Counter(str(u.kind) for u in units).items())),
            nodes=len(store.nodes),
            edges_by_validity=dict(sorted(Counter(str(e.validity) for e in store.edges.values()).items())),
            utterances=len(store.utterances),
            live_tokens=live_tokens(store),
        )

    async def profile(self, space_id: str, now: int | None = None, limit: int = 10) -> SpaceProfile:
        """Strongest active facts, preference tags and unresolved conflicts of a space."""
        when = self.now(now)
        store = await self.get_store(space_id)
        params = self.settings.activation
        facts = [u for u in store.iter_units([LifecycleState.ACTIVE]) if u.kind is UnitKind.FACT]
        facts.sort(key=lambda u: (-unit_retention(u, when, params), u.id))
        live = store.live_units()
        return SpaceProfile(
            space_id=space_id,
            now=when,
            top_facts=[UnitView.of(u) for u in facts[:limit]],
            preference_tags=sorted(
                {tag for u in live for tag in u.preference_tags if tag.startswith(PREFERENCE_PREFIX)}
            ),
            unresolved_conflicts=[UnitView.of(u) for u in live if CONFLICT_FLAG in u.flags],
        )

    def list_spaces(self) -> list[dict[str, Any]]:
        with get_db().get_read_connection() as conn:
            return repository.list_spaces(conn)

    def generations(self) -> dict[str, int]:
        return {row["space_id"]: row["generation"] for row in self.list_spaces()}

    # ----------------------------------------------------------- durability

    async def export(self, space_id: str, path: str | Path) -> Path:
        store = await self.get_store(space_id)
        target = write_snapshot(store, path)
        get_audit_service().log_data_event("export", space_id, path=target, units=len(store))
        return target

    async def import_snapshot(self, path: str | Path, space_id: str | None = None) -> SpaceStats:
        """
        Load a snapshot as the complete content of a space.

        Raises:
            CorruptSnapshot: On checksum, count or record errors
            VersionUnsupported: On an unknown format version
        """
        records = read_snapshot(path)
        source = MemoryStore.from_records(records)
        target_id = space_id or source.space_id
        if target_id != source.space_id:
            for unit in list(source.units.values()):
                source.units[unit.id] = unit.model_copy(update={"space_id": target_id})
            source.space_id = target_id
        imported = self._new_store(target_id, source.to_records())

        def operation(conn: sqlite3.Connection) -> int:
            repository.ensure_space(conn, target_id)
            _, after = repository.compact_space(conn, target_id, imported.to_records())
            repository.update_space_meta(
                conn, target_id, generation=imported.generation, store_version=imported.version
            )
            return after

        queue = await get_write_queue(target_id)
        await queue.execute_with_connection(
            f"import [{target_id}]",
            operation,
            callback=lambda _: self._spaces.__setitem__(target_id, imported),
        )
        get_audit_service().log_data_event("import", target_id, path=path, units=len(imported))
        return await self.stats(target_id)

    async def compact(self, space_id: str, *, purge: bool = False, confirm: bool = False) -> CompactResponse:
        """
        Rewrite the log to one record per element; ``purge`` also drops SoftDeleted units.

        Raises:
            PurgeRefused: If ``purge`` is requested without ``confirm``
        """
        if purge and not confirm:
            raise PurgeRefused("purge permanently deletes soft-deleted units; pass confirm")
        await self.get_store(space_id)

        def operation(conn: sqlite3.Connection) -> tuple[MemoryStore, CompactResponse]:
            loaded = self._spaces.get(space_id)
            working = (loaded if loaded is not None else self._load(conn, space_id)).clone()
            purged = 0
            if purge:
                for unit in list(working.iter_units([LifecycleState.SOFT_DELETED])):
                    working.remove_unit(unit.id)
                    purged += 1
            working.drain_changes()
            before, after = repository.compact_space(conn, space_id, working.to_records())
            repository.update_space_meta(
                conn, space_id, generation=working.generation, store_version=working.version
            )
            return working, CompactResponse(
                space_id=space_id, records_before=before, records_after=after, purged_units=purged
            )

        queue = await get_write_queue(space_id)
        _, response = await queue.execute_with_connection(
            f"compact [{space_id}]",
            operation,
            callback=lambda raw: self._spaces.__setitem__(space_id, raw[0]),
        )
        get_audit_service().log_data_event(
            "purge" if purge else "compact",
            space_id,
            before=response.records_before,
            after=response.records_after,
            purged=response.purged_units,
        )
        return response

    # ------------------------------------------------------------------ hub

    async def register_agent(self, profile: AgentProfile) -> AgentProfile:
        self.hub.register_agent(profile)
        queue = await get_write_queue(HUB_QUEUE)
        try:
            await queue.execute_with_connection(
                f"register agent {profile.agent_id}",
                lambda conn: repository.save_agent(conn, profile),
            )
        except Exception:
            self.hub.unregister(profile.agent_id)
            raise
        get_audit_service().log_hub_event("register", agent=profile.agent_id, space=profile.space_id)
        return profile

    def route(self, request: RouteRequest) -> AgentProfile:
        return self.hub.get_agent(self.hub.route(request))

    async def share(
        self,
        agent_id: str,
        topic_tags: Iterable[str],
        permissions: SharePermission | None = None,
        now: int | None = None,
    ) -> ShareEnvelope:
        """Summarize an agent's memory on a topic into an envelope."""
        agent = self.hub.get_agent(agent_id)
        topic = tuple(topic_tags)
        if not topic:
            raise EmptySelection("share needs at least one topic tag")
        store = await self.get_store(agent.space_id)
        envelope = summarize_for_share(
            store,
            topic,
            permissions,
            origin_agent=agent_id,
            now=self.now(now),
            ttl_seconds=self.settings.hub.envelope_ttl_seconds,
        )
        get_audit_service().log_hub_event(
            "share",
            agent=agent_id,
            envelope=envelope.envelope_id[:12],
            units=len(envelope.summary_units),
            permission=envelope.permissions.kind,
        )
        return envelope

    async def apply(self, envelope: ShareEnvelope, target_agent_id: str, now: int | None = None) -> ApplyReport:
        """Apply an envelope to the target agent's space through that space's writer."""
        agent = self.hub.get_agent(target_agent_id)
        when = self.now(now)

        def mutate(store: MemoryStore) -> tuple[MemoryStore, ApplyReport]:
            return store, apply_shared(envelope, store, when, agent.responsibility_domain)

        def record(conn: sqlite3.Connection, store: MemoryStore, report: ApplyReport) -> None:
            if not report.already_applied and not report.rejected_expired:
                repository.record_envelope(conn, agent.space_id, envelope.origin_agent, report)

        report = await self._commit(agent.space_id, "apply envelope", mutate, create=True, after=record)
        get_audit_service().log_hub_event(
            "apply",
            agent=target_agent_id,
            envelope=envelope.envelope_id[:12],
            accepted=report.accepted,
            rejected_conflict=report.rejected_conflict,
            rejected_expired=report.rejected_expired,
        )
        return report

    async def exchange(
        self,
        agent_id: str,
        target_agent_id: str,
        topic_tags: Iterable[str],
        permissions: SharePermission | None = None,
        now: int | None = None,
    ) -> tuple[ShareEnvelope, ApplyReport]:
        """share, transmit and apply in one step."""
        when = self.now(now)
        self.hub.get_agent(target_agent_id)
        envelope = transmit(await self.share(agent_id, topic_tags, permissions, when), when)
        return envelope, await self.apply(envelope, target_agent_id, when)


_memory_service: MemoryService | None = None


def get_memory_service() -> MemoryService:
    """Return the process-wide memory service."""
    global _memory_service
    if _memory_service is None:
        _memory_service = MemoryService()
    return _memory_service


def reset_memory_service() -> None:
    global _memory_service
    _memory_service = None
