"""Hybrid retrieval: similarity, activation, preferences and emotion, plus
spreading activation over the knowledge graph.

Ranking is an exact scan. A vectorized upper bound orders the candidates and
stops exact scoring once no remaining unit can reach the current k-th score, so
results are identical to scoring every unit with ``score_unit``.
"""

from __future__ import annotations

import heapq
import logging
from collections.abc import Collection, Iterable
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from app.errors import ClockSkew, EmptyUtterance, UnknownNode
from app.models.activation import ActivationParams, ScoreWeights
from app.models.memory import MemoryUnit
from app.services.activation_service import squashed_activation, touch_unit
from app.services.annotation_service import Annotator
from app.services.graph_store import MemoryStore
from app.utils.embedding import cosine

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-9


def preference_overlap(prefs: Collection[str], tags: Collection[str]) -> float:
    """Jaccard overlap; two empty sets overlap 0."""
    a, b = set(prefs), set(tags)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def score_unit(
    query_vec: np.ndarray,
    unit: MemoryUnit,
    now: int,
    w: ScoreWeights,
    prefs: Collection[str] = (),
    params: ActivationParams | None = None,
) -> float:
    """Convex combination of similarity, squashed activation, preference overlap and emotion."""
    params = params or ActivationParams()
    similarity = max(0.0, cosine(query_vec, unit.embedding))
    return (
        w.w_sim * similarity
        + w.w_act * squashed_activation(unit.trace, now, params)
        + w.w_pref * preference_overlap(prefs, unit.preference_tags)
        + w.w_emo * unit.emotion_weight
    )


@dataclass(frozen=True)
class SpreadResult:
    boosts: dict[str, float]
    predecessors: dict[str, tuple[str, str]] = field(default_factory=dict)

    def path_to(self, node_id: str) -> tuple[str, ...]:
        """Edge ids from the originating seed to ``node_id``."""
        edges: list[str] = []
        seen = {node_id}
        while node_id in self.predecessors:
            parent, edge_id = self.predecessors[node_id]
            edges.append(edge_id)
            if parent in seen:
                break
            seen.add(parent)
            node_id = parent
        return tuple(reversed(edges))


def spread_with_paths(store: MemoryStore, seeds: Iterable[str], w: ScoreWeights) -> SpreadResult:
    """
    Propagate activation from ``seeds`` over Valid edges in both directions.

    Each hop multiplies by ``hop_decay`` and by the edge strength normalized by
    the strongest Valid edge at the node the hop leaves. A node keeps the
    maximum over paths of at most ``max_hops`` edges.

    Raises:
        UnknownNode: If a seed is not in the store
    """
    resolved: list[str] = []
    for seed in seeds:
        node_id = store.resolve_node_id(seed)
        if node_id not in store.nodes:
            raise UnknownNode(f"unknown seed node {seed!r}")
        resolved.append(node_id)

    boosts = {node_id: 1.0 for node_id in resolved}
    predecessors: dict[str, tuple[str, str]] = {}
    if not boosts or w.max_hops == 0:
        return SpreadResult(boosts)

    graph = store.valid_graph()
    frontier = set(boosts)
    for _ in range(w.max_hops):
        previous = dict(boosts)
        improved: set[str] = set()
        for node_id in sorted(frontier):
            incident = sorted(
                (key, other, data["strength"])
                for _, other, key, data in graph.edges(node_id, keys=True, data=True)
            )
            if not incident:
                continue
            strongest = max(strength for _, _, strength in incident)
            if strongest <= 0.0:
                continue
            for edge_id, other, strength in incident:
                if other == node_id:
                    continue
                candidate = previous[node_id] * w.hop_decay * strength / strongest
                if candidate > boosts.get(other, 0.0):
                    boosts[other] = candidate
                    predecessors[other] = (node_id, edge_id)
                    improved.add(other)
        if not improved:
            break
        frontier = improved
    return SpreadResult(boosts, predecessors)


def spread(store: MemoryStore, seeds: Iterable[str], w: ScoreWeights) -> dict[str, float]:
    """Node id -> activation boost."""
    return spread_with_paths(store, seeds, w).boosts


class ScanIndex:
    """Column arrays over the eligible units, rebuilt when the eligible set changes.

    Trace changes are patched in from the store's trace journal.
    """

    def __init__(self, store: MemoryStore):
        units = store.live_units()
        self.index_version = store.index_version
        self.ids = [u.id for u in units]
        self.rows = {unit_id: i for i, unit_id in enumerate(self.ids)}
        cap = store.params.history_cap
        dim = getattr(store.embedder, "dim", 0)
        self.matrix = (
            np.vstack([u.embedding for u in units]) if units else np.zeros((0, dim))
        )
        self.emotion = np.array([u.emotion_weight for u in units], dtype=np.float64)
        self.tagged = [(i, frozenset(u.preference_tags)) for i, u in enumerate(units) if u.preference_tags]
        self.times = np.full((len(units), cap), np.nan)
        self.summary_count = np.zeros(len(units))
        self.summary_mean = np.zeros(len(units))
        for i, unit in enumerate(units):
            self._load_trace(i, unit)
        self.journal_offset = len(store.trace_journal)

    def _load_trace(self, row: int, unit: MemoryUnit) -> None:
        times = unit.trace.retrieval_times[-self.times.shape[1] :]
        self.times[row] = np.nan
        self.times[row, : len(times)] = times
        self.summary_count[row] = unit.trace.summarized_count
        self.summary_mean[row] = unit.trace.summarized_mean

    def refresh(self, store: MemoryStore) -> None:
        for unit_id in store.trace_journal[self.journal_offset :]:
            row = self.rows.get(unit_id)
            unit = store.units.get(unit_id)
            if row is not None and unit is not None:
                self._load_trace(row, unit)
        self.journal_offset = len(store.trace_journal)

    def squashed(self, now: int, params: ActivationParams) -> np.ndarray:
        unit = float(params.time_unit_seconds)
        ages = np.maximum((now - self.times) / unit, 1.0)
        terms = np.where(np.isnan(self.times), 0.0, ages ** (-params.d))
        strength = terms.sum(axis=1)
        summary_age = np.maximum((now - self.summary_mean) / unit, 1.0)
        strength += self.summary_count * summary_age ** (-params.d)
        return strength / (1.0 + strength)


def scan_index(store: MemoryStore) -> ScanIndex:
    index = store.scan_cache
    if not isinstance(index, ScanIndex) or index.index_version != store.index_version:
        index = ScanIndex(store)
        store.scan_cache = index
    else:
        index.refresh(store)
    return index


def rank_units(
    store: MemoryStore,
    query_vec: np.ndarray,
    k: int,
    now: int,
    w: ScoreWeights,
    prefs: Collection[str] = (),
    params: ActivationParams | None = None,
    boosts: dict[str, float] | None = None,
) -> list[tuple[MemoryUnit, float, float]]:
    """
    Top-k eligible units as (unit, score, boost), read-only.

    Score is ``score_unit + w_act * boost`` where boost is the largest spreading
    boost among the nodes referencing the unit. Ties break by more recent
    last access, then ascending id.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    params = params or store.params
    index = scan_index(store)
    if not index.ids:
        return []

    unit_boost = np.zeros(len(index.ids))
    for node_id, boost in (boosts or {}).items():
        node = store.nodes.get(node_id)
        if node is None:
            continue
        for unit_id in node.unit_refs:
            row = index.rows.get(store.resolve_unit_id(unit_id))
            if row is not None and boost > unit_boost[row]:
                unit_boost[row] = boost

    pref_scores = np.zeros(len(index.ids))
    if prefs:
        wanted = frozenset(prefs)
        for row, tags in index.tagged:
            pref_scores[row] = len(wanted & tags) / len(wanted | tags)

    similarity = np.maximum(index.matrix @ np.asarray(query_vec, dtype=np.float64), 0.0)
    bound = (
        w.w_sim * similarity
        + w.w_act * (index.squashed(now, params) + unit_boost)
        + w.w_pref * pref_scores
        + w.w_emo * index.emotion
        + BOUND_SLACK
    )

    best: list[float] = []
    scored: list[tuple[MemoryUnit, float, float]] = []
    for row in np.argsort(-bound, kind="stable"):
        if len(best) >= k and bound[row] < best[0]:
            break
        unit = store.units[index.ids[row]]
        boost = float(unit_boost[row])
        score = score_unit(query_vec, unit, now, w, prefs, params) + w.w_act * boost
        scored.append((unit, score, boost))
        if len(best) < k:
            heapq.heappush(best, score)
        elif score > best[0]:
            heapq.heapreplace(best, score)

    scored.sort(key=lambda item: (-item[1], -item[0].trace.last_access, item[0].id))
    return scored[:k]


@dataclass(frozen=True)
class RetrievalHit:
    unit: MemoryUnit
    score: float
    boost: float = 0.0
    path: tuple[str, ...] = ()


def query_seeds(store: MemoryStore, query: str, annotator: Annotator | None) -> list[str]:
    """Nodes matching the Strong entities of the annotated query."""
    if annotator is None:
        return []
    try:
        anchors = annotator.annotate(query)
    except EmptyUtterance:
        return []
    seeds: list[str] = []
    for entity in anchors.strong_entities:
        node = store.node_for_label(entity.surface)
        if node is not None and node.id not in seeds:
            seeds.append(node.id)
    return sorted(seeds)


def rank_query(
    store: MemoryStore,
    query: str,
    k: int,
    now: int,
    w: ScoreWeights,
    prefs: Collection[str] = (),
    params: ActivationParams | None = None,
    annotator: Annotator | None = None,
) -> list[RetrievalHit]:
    """Read-only half of ``retrieve_topk``."""
    query_vec = store.embedder.embed(query)
    spread_result = spread_with_paths(store, query_seeds(store, query, annotator), w)
    ranked = rank_units(store, query_vec, k, now, w, prefs, params, spread_result.boosts)

    hits: list[RetrievalHit] = []
    for unit, score, boost in ranked:
        path: tuple[str, ...] = ()
        if boost > 0.0:
            best_node = min(
                (n for n in store.nodes_of_unit(unit.id) if n in spread_result.boosts),
                key=lambda n: (-spread_result.boosts[n], n),
                default=None,
            )
            if best_node is not None:
                path = spread_result.path_to(best_node)
        hits.append(RetrievalHit(unit=unit, score=score, boost=boost, path=path))
    return hits


def apply_access(store: MemoryStore, hits: Iterable[RetrievalHit], now: int) -> list[RetrievalHit]:
    """
    Record the retrieval side effects of ``hits`` at ``now``.

    At most one event per (unit, timestamp); a PendingForget unit re-activates;
    edges on contributing paths count a hit for the next reflection.
    """
    params = store.params
    applied: list[RetrievalHit] = []
    for hit in hits:
        unit = store.units.get(store.resolve_unit_id(hit.unit.id))
        if unit is None or not unit.is_live:
            continue
        if now in unit.trace.retrieval_times:
            applied.append(RetrievalHit(unit, hit.score, hit.boost, hit.path))
            continue
        try:
            touched = touch_unit(unit, now, params)
        except ClockSkew:
            logger.debug("Skipping access of %s at %s: clock skew", unit.id, now)
            applied.append(RetrievalHit(unit, hit.score, hit.boost, hit.path))
            continue
        store.note_access(touched)
        for edge_id in hit.path:
            if edge_id in store.edges:
                store.path_hits[edge_id] += 1
        if hit.path:
            store.mark_meta_dirty()
        applied.append(RetrievalHit(touched, hit.score, hit.boost, hit.path))
    return applied


def retrieve_topk(
    store: MemoryStore,
    query: str,
    k: int,
    now: int,
    w: ScoreWeights,
    prefs: Collection[str] = (),
    params: ActivationParams | None = None,
    annotator: Annotator | None = None,
) -> list[RetrievalHit]:
    """Rank, then record an access on every returned unit."""
    hits = rank_query(store, query, k, now, w, prefs, params, annotator)
    return apply_access(store, hits, now)


def multi_hop_path(
    store: MemoryStore, entity_a: str, entity_b: str, max_hops: int
) -> list[list[str]]:
    """
    All simple paths of at most ``max_hops`` Valid edges, shortest first.

    Raises:
        UnknownNode: If either entity does not resolve to a node
    """
    a = store.require_node(entity_a).id
    b = store.require_node(entity_b).id
    if a == b:
        return [[]]
    if max_hops < 1:
        return []
    graph = store.valid_graph()
    paths = {
        tuple(key for _, _, key in path)
        for path in nx.all_simple_edge_paths(graph, a, b, cutoff=max_hops)
    }
    return [list(path) for path in sorted(paths, key=lambda p: (len(p), p))]
