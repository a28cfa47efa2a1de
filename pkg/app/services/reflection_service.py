"""Offline reflection over a memory space.

A cycle runs on a copy of the store: feedback, then the temporal, factual and
logical passes, then pruning and a forgetting sweep. The caller swaps the copy in
only after the whole cycle succeeded, so a failing pass leaves the live store as
it was.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import networkx as nx

from app.config import Settings
from app.models.activation import ActivationParams
from app.models.graph import EdgeValidity
from app.models.maintenance import (
    FeedbackEntry,
    Finding,
    LogicalReport,
    ReflectionReport,
    Resolution,
)
from app.models.memory import LifecycleState, MemoryUnit, TemporalClass, UnitKind
from app.services.activation_service import merge_traces, record_access
from app.services.forget_service import DEFAULT_GRACE_SECONDS, sweep
from app.services.graph_store import MemoryStore
from app.services.prune_service import PruneConfig, compress_unit, prune

logger = logging.getLogger(__name__)

CONFLICT_FLAG = "conflict-unresolved"
TENSE_RANK = {TemporalClass.PAST: 0, TemporalClass.PRESENT: 1, TemporalClass.FUTURE: 2}


@dataclass(frozen=True)
class ReflectionConfig:
    ambiguity_window: int = 3600
    reinforce_delta: float = 0.1
    strength_cap: float = 10.0
    weaken_ceiling: float = 1.0
    failed_strength: float = 0.01
    grace: int = DEFAULT_GRACE_SECONDS
    prune: PruneConfig = PruneConfig()
    params: ActivationParams = ActivationParams()

    @classmethod
    def from_settings(cls, settings: Settings) -> "ReflectionConfig":
        memory = settings.memory
        return cls(
            ambiguity_window=memory.ambiguity_window_seconds,
            reinforce_delta=memory.reinforce_delta,
            strength_cap=memory.strength_cap,
            weaken_ceiling=memory.weaken_ceiling,
            failed_strength=memory.failed_strength,
            grace=memory.grace_seconds,
            prune=PruneConfig.from_settings(settings),
            params=settings.activation,
        )


# --------------------------------------------------------------- temporal


def _first_local_seq(store: MemoryStore, unit: MemoryUnit) -> int | None:
    seqs = [store.utterances[ref].seq for ref in unit.provenance if ref in store.utterances]
    return min(seqs) if seqs else None


def reflect_temporal(store: MemoryStore) -> list[Finding]:
    """
    Advisory findings, no mutation.

    ``ordering``: a unit created before an earlier utterance's unit.
    ``inversion``: within one relation chain, a later unit is in an earlier tense.
    """
    findings: list[Finding] = []

    ordered = sorted(
        (seq, unit.id, unit)
        for unit in store.units.values()
        if (seq := _first_local_seq(store, unit)) is not None
    )
    running: MemoryUnit | None = None
    for _, _, unit in ordered:
        if running is not None and unit.created_at < running.created_at:
            findings.append(
                Finding(
                    kind="ordering",
                    subjects=(running.id, unit.id),
                    detail=f"{unit.id} created at {unit.created_at} after {running.id} at {running.created_at}",
                )
            )
        if running is None or unit.created_at >= running.created_at:
            running = unit

    chains: dict[tuple[str, str], list[MemoryUnit]] = {}
    for unit in store.units.values():
        if unit.relation is not None:
            chains.setdefault((unit.relation.head, unit.relation.label), []).append(unit)
    for (head, label), members in sorted(chains.items()):
        events = [
            u
            for u in sorted(members, key=lambda u: (u.created_at, u.id))
            if u.anchors.temporal_class in TENSE_RANK
        ]
        for earlier, later in zip(events, events[1:]):
            if TENSE_RANK[later.anchors.temporal_class] < TENSE_RANK[earlier.anchors.temporal_class]:
                findings.append(
                    Finding(
                        kind="inversion",
                        subjects=(earlier.id, later.id),
                        detail=(
                            f"{head}|{label}: {later.anchors.temporal_class} after "
                            f"{earlier.anchors.temporal_class}"
                        ),
                    )
                )
    return findings


# ---------------------------------------------------------------- factual


def _slot(unit: MemoryUnit, functional: frozenset[str]) -> str | None:
    if unit.relation is not None and unit.relation.label in functional:
        return f"{unit.relation.head}|{unit.relation.label}"
    return None


def reflect_factual(
    store: MemoryStore, now: int, cfg: ReflectionConfig | None = None
) -> list[Resolution]:
    """
    Resolve functional-relation conflicts among live Fact units.

    Values older than the ambiguity window relative to the newest are replaced
    (Compressed, pointing at the survivor). Values inside the window are fused
    into one unit listing every value and flagged ``conflict-unresolved``.
    """
    cfg = cfg or ReflectionConfig()
    store.detect_failed_edges(now)

    groups: dict[str, list[MemoryUnit]] = {}
    for unit in store.live_units():
        if unit.kind is UnitKind.FACT:
            slot = _slot(unit, store.functional_relations)
            if slot is not None:
                groups.setdefault(slot, []).append(unit)

    resolutions: list[Resolution] = []
    for slot in sorted(groups):
        members = sorted(groups[slot], key=lambda u: (u.created_at, u.id))
        if len({u.relation.tail for u in members}) < 2:
            continue
        newest = members[-1]
        recent = [u for u in members if newest.created_at - u.created_at <= cfg.ambiguity_window]
        recent_ids = {u.id for u in recent}
        stale = [u for u in members if u.id not in recent_ids]

        survivor = newest
        if len(recent) >= 2:
            survivor = _fuse_conflict(store, recent)
            resolutions.append(
                Resolution(
                    kind="fusion",
                    fact_key=slot,
                    kept=survivor.id,
                    affected=tuple(u.id for u in recent if u.id != survivor.id),
                )
            )
        for unit in stale:
            compress_unit(store, store.units[unit.id], now, survivor.id)
        if stale:
            resolutions.append(
                Resolution(
                    kind="replacement",
                    fact_key=slot,
                    kept=survivor.id,
                    affected=tuple(u.id for u in stale),
                )
            )
    if resolutions:
        logger.info("Factual reflection on %s: %d resolution(s)", store.space_id, len(resolutions))
    return resolutions


def _fuse_conflict(store: MemoryStore, members: list[MemoryUnit]) -> MemoryUnit:
    """Fuse same-slot units into the earliest; content lists every value."""
    target, *others = members
    contents = list(dict.fromkeys(u.content for u in members))
    content = " | ".join(contents)
    provenance = tuple(dict.fromkeys(ref for u in members for ref in u.provenance))
    trace = target.trace
    for other in others:
        trace = merge_traces(trace, other.trace, store.params.history_cap)
    keys = set(target.merged_keys)
    for other in others:
        keys |= other.keys
    keys.discard(target.fact_key)
    fused = target.model_copy(
        update={
            "content": content,
            "embedding": store.embedder.embed(content),
            "provenance": provenance,
            "trace": trace,
            "merged_keys": tuple(sorted(keys)),
            "flags": tuple(sorted({*target.flags, CONFLICT_FLAG})),
            "emotion_weight": max(u.emotion_weight for u in members),
            "preference_tags": tuple(sorted({t for u in members for t in u.preference_tags})),
        }
    )
    store.replace_unit(fused)
    for member in members:
        store.index_content(member.kind, member.content, target.id)
    for other in others:
        store.absorb_unit(other.id, target.id)
    return store.units[target.id]


# ---------------------------------------------------------------- logical


def reflect_logical(store: MemoryStore, cfg: ReflectionConfig | None = None) -> LogicalReport:
    """
    Reinforce edges on retrieved paths, then flag dangling chains and
    functional-relation cycles.
    """
    cfg = cfg or ReflectionConfig()
    report = LogicalReport()

    for edge_id, count in sorted(store.path_hits.items()):
        edge = store.edges.get(edge_id)
        if edge is None or edge.validity is EdgeValidity.FAILED or count <= 0:
            continue
        strength = min(cfg.strength_cap, edge.strength + cfg.reinforce_delta * count)
        validity = edge.validity
        if validity is EdgeValidity.WEAKENED and strength >= cfg.weaken_ceiling:
            validity = EdgeValidity.VALID
        if strength != edge.strength or validity is not edge.validity:
            store.set_edge(edge.model_copy(update={"strength": strength, "validity": validity}))
            report.reinforced[edge_id] = round(strength - edge.strength, 12)
    if store.path_hits:
        store.path_hits.clear()
        store.mark_meta_dirty()

    for node_id in sorted(store.nodes):
        incident = [
            store.edges[key]
            for _, _, key in [*store.graph.out_edges(node_id, keys=True), *store.graph.in_edges(node_id, keys=True)]
        ]
        valid = [e for e in incident if e.validity is EdgeValidity.VALID]
        broken = [e for e in incident if e.validity is not EdgeValidity.VALID]
        if len(valid) == 1 and broken:
            report.findings.append(
                Finding(
                    kind="dangling",
                    subjects=(node_id, valid[0].id, *sorted(e.id for e in broken)),
                    detail=f"{store.nodes[node_id].label} keeps one valid edge",
                )
            )

    functional = nx.DiGraph()
    for edge_id in sorted(store.edges):
        edge = store.edges[edge_id]
        if edge.validity is not EdgeValidity.FAILED and edge.relation_label in store.functional_relations:
            functional.add_edge(edge.head, edge.tail)
    cycles = sorted(sorted(cycle) for cycle in nx.simple_cycles(functional) if len(cycle) > 1)
    for cycle in cycles:
        report.findings.append(
            Finding(kind="suspect_cycle", subjects=tuple(cycle), detail="functional relations form a cycle")
        )
    return report


# --------------------------------------------------------------- feedback


def read_feedback(path: str | Path) -> list[FeedbackEntry]:
    """JSON lines of ``{"unit_id", "delta"}``; a missing file means no feedback."""
    feedback_path = Path(path)
    if not feedback_path.exists():
        return []
    entries = []
    for line in feedback_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(FeedbackEntry.model_validate(json.loads(line)))
    return entries


def apply_feedback(store: MemoryStore, entries: Iterable[FeedbackEntry], now: int) -> int:
    """Adjust emotion weights; positive feedback also counts as an access."""
    applied = 0
    for entry in entries:
        unit = store.units.get(store.resolve_unit_id(entry.unit_id))
        if unit is None or not unit.is_live:
            logger.warning("Ignoring feedback for unknown or retired unit %s", entry.unit_id)
            continue
        updates: dict = {"emotion_weight": min(1.0, max(0.0, unit.emotion_weight + entry.delta))}
        if entry.delta > 0 and now >= unit.trace.last_access and now not in unit.trace.retrieval_times:
            updates["trace"] = record_access(unit.trace, now, store.params.history_cap)
        updated = unit.model_copy(update=updates)
        if unit.state is LifecycleState.PENDING_FORGET and "trace" in updates:
            updated = updated.transition(LifecycleState.ACTIVE)
        store.replace_unit(updated)
        applied += 1
    return applied


# ------------------------------------------------------------------ cycle


def run_reflection_cycle(
    store: MemoryStore,
    now: int,
    cfg: ReflectionConfig | None = None,
    feedback: Iterable[FeedbackEntry] = (),
) -> tuple[MemoryStore, ReflectionReport]:
    """
    Run a full cycle on a copy of ``store``.

    Returns:
        (new store, report); the original store is never modified
    """
    cfg = cfg or ReflectionConfig()
    working = store.clone()
    report = ReflectionReport(space_id=store.space_id, generation=store.generation + 1, now=now)

    report.feedback_applied = apply_feedback(working, feedback, now)
    report.temporal = reflect_temporal(working)
    report.failed_edges = working.detect_failed_edges(now)
    report.factual = reflect_factual(working, now, cfg)
    report.logical = reflect_logical(working, cfg)
    report.prune = prune(working, now, cfg.prune)
    report.forget = sweep(
        working,
        now,
        cfg.params,
        cfg.grace,
        weaken_ceiling=cfg.weaken_ceiling,
        failed_strength=cfg.failed_strength,
    )
    working.generation += 1
    working.mark_meta_dirty()
    logger.info(
        "Reflection cycle %d on %s: %d mutation(s)",
        working.generation,
        store.space_id,
        report.mutation_count,
    )
    return working, report
