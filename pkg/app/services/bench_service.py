"""Retrieval latency and token-efficiency measurements.

The bench runs on an in-memory store built from a corpus (or loaded from the
database by the caller) and never writes to the database. Queries use the
read-only ranking path so repeated runs see the same store.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Iterable, Sequence

import numpy as np

from app.config import Settings, get_settings
from app.models.api import IngestRequest
from app.models.corpus import BenchReport, Corpus, Probe
from app.models.activation import ActivationTrace
from app.models.memory import MemoryUnit, SemanticAnchorSet, UnitKind
from app.services.annotation_service import Annotator, build_annotator
from app.services.graph_store import MemoryStore
from app.services.memory_service import ingest_utterance
from app.services.prune_service import live_tokens
from app.services.reflection_service import ReflectionConfig, run_reflection_cycle
from app.services.retrieval_service import rank_query, scan_index
from app.utils.embedding import get_embedder
from app.utils.text import count_tokens

logger = logging.getLogger(__name__)

DEFAULT_TARGET_MS = 100.0
FILLER_WORDS = (
    "parcel", "ledger", "window", "garden", "signal", "copper", "harbor", "lantern",
    "meadow", "canvas", "pillow", "basket", "orbit", "timber", "velvet", "quarry",
)


def build_store(
    turns: Iterable[IngestRequest],
    *,
    settings: Settings | None = None,
    annotator: Annotator | None = None,
    space_id: str = "bench",
) -> MemoryStore:
    """Ingest ``turns`` into a fresh in-memory store."""
    settings = settings or get_settings()
    annotator = annotator or build_annotator(settings)
    store = MemoryStore(
        space_id,
        functional_relations=settings.memory.functional_relations,
        embedder=get_embedder(settings.memory.embedding_dim),
        params=settings.activation,
    )
    for turn in turns:
        ingest_utterance(store, turn, annotator, settings.memory.context_window)
    store.drain_changes()
    return store


def pad_store(store: MemoryStore, units: int, now: int, seed: int = 0) -> int:
    """
    Add random filler facts until the store holds ``units`` units.

    Returns:
        Number of units added
    """
    rng = np.random.default_rng(seed)
    added = 0
    while len(store) < units:
        picks = rng.integers(0, len(FILLER_WORDS), size=5)
        serial = int(rng.integers(0, 10**9))
        content = " ".join(FILLER_WORDS[i] for i in picks) + f" {serial}"
        created = now - int(rng.integers(0, 90 * 86400))
        unit = MemoryUnit(
            space_id=store.space_id,
            kind=UnitKind.FACT,
            content=content,
            fact_key=content,
            anchors=SemanticAnchorSet(facts=(content,)),
            embedding=store.embedder.embed(content),
            created_at=created,
            trace=ActivationTrace.created(created),
            provenance=(f"bench:{serial}",),
        )
        before = len(store)
        store.upsert_unit(unit)
        added += len(store) - before
    store.drain_changes()
    return added


def probe_answered(hits, probe: Probe) -> bool:
    return any(probe.fact_key in hit.unit.keys for hit in hits)


def run_queries(
    store: MemoryStore,
    queries: Sequence[str],
    *,
    k: int,
    now: int,
    settings: Settings,
    annotator: Annotator | None,
) -> tuple[list[float], list[list]]:
    """Latency in milliseconds and hits of each query."""
    latencies: list[float] = []
    results: list[list] = []
    for query in queries:
        started = time.perf_counter()
        hits = rank_query(store, query, k, now, settings.weights, (), settings.activation, annotator)
        latencies.append((time.perf_counter() - started) * 1000.0)
        results.append(hits)
    return latencies, results


def bench_store(
    store: MemoryStore,
    probes: Sequence[Probe],
    *,
    now: int,
    tokens_full_history: int,
    k: int = 5,
    repeat: int = 1,
    target_ms: float = DEFAULT_TARGET_MS,
    settings: Settings | None = None,
    annotator: Annotator | None = None,
) -> BenchReport:
    """Time every probe question ``repeat`` times and score the answers of the first pass."""
    settings = settings or get_settings()
    annotator = annotator or build_annotator(settings)
    if not probes:
        raise ValueError("bench needs at least one probe question")

    scan_index(store)
    questions = [probe.question for probe in probes]
    latencies: list[float] = []
    first_hits: list[list] = []
    for round_no in range(max(1, repeat)):
        timings, hits = run_queries(store, questions, k=k, now=now, settings=settings, annotator=annotator)
        latencies.extend(timings)
        if round_no == 0:
            first_hits = hits

    retrieved = [sum(hit.unit.token_count for hit in hits) for hits in first_hits]
    answered = sum(probe_answered(hits, probe) for hits, probe in zip(first_hits, probes))
    p50, p95 = (float(v) for v in np.percentile(np.asarray(latencies), [50, 95]))
    tokens_retrieved = float(np.mean(retrieved))
    report = BenchReport(
        units=len(store),
        queries=len(latencies),
        k=k,
        p50_ms=round(p50, 3),
        p95_ms=round(p95, 3),
        target_ms=target_ms,
        within_target=p95 <= target_ms,
        tokens_retrieved=round(tokens_retrieved, 3),
        tokens_full_history=tokens_full_history,
        ratio=round(tokens_retrieved / tokens_full_history, 6) if tokens_full_history else 0.0,
        probes_answered=answered,
        probes_total=len(probes),
    )
    level = logging.INFO if report.within_target else logging.WARNING
    logger.log(
        level,
        "Bench over %d unit(s): p50=%.2fms p95=%.2fms (target %.0fms) ratio=%.4f answered=%d/%d",
        report.units,
        report.p50_ms,
        report.p95_ms,
        target_ms,
        report.ratio,
        answered,
        len(probes),
    )
    return report


def run_bench(
    corpus: Corpus,
    *,
    k: int = 5,
    maintain: bool = True,
    pad_to: int = 0,
    repeat: int = 1,
    target_ms: float = DEFAULT_TARGET_MS,
    settings: Settings | None = None,
    annotator: Annotator | None = None,
) -> BenchReport:
    """
    Build a store from ``corpus``, optionally run a reflection cycle, then bench its probes.

    ``pad_to`` grows the store with filler facts to measure latency at scale.
    """
    settings = settings or get_settings()
    annotator = annotator or build_annotator(settings)
    store = build_store(corpus.turns, settings=settings, annotator=annotator)
    now = max((turn.ts for turn in corpus.turns), default=0)
    full_history = sum(count_tokens(turn.utterance) for turn in corpus.turns)

    before = live_tokens(store)
    if maintain:
        store, _ = run_reflection_cycle(store, now, ReflectionConfig.from_settings(settings))
    after = live_tokens(store)
    if pad_to:
        pad_store(store, pad_to, now, corpus.config.seed)

    report = bench_store(
        store,
        corpus.probes,
        now=now,
        tokens_full_history=full_history,
        k=k,
        repeat=repeat,
        target_ms=target_ms,
        settings=settings,
        annotator=annotator,
    )
    return report.model_copy(
        update={
            "tokens_live_before_prune": before,
            "tokens_live_after_prune": after,
            "redundant_tokens": corpus.redundant_tokens,
        }
    )
