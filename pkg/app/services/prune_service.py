"""Semantic pruning: association mapping, redundancy classification and refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np

from app.config import Settings
from app.errors import StaleVerdicts
from app.models.activation import ActivationParams
from app.models.graph import EdgeValidity
from app.models.maintenance import PruneReport, RedundancyClass, RedundancyVerdict
from app.models.memory import DialogueAct, LifecycleState, MemoryUnit, UnitKind
from app.services.activation_service import merge_traces, trace_activation, unit_retention
from app.services.graph_store import MemoryStore

logger = logging.getLogger(__name__)

ENTITY_CLIQUE_LIMIT = 50
DUPLICATE_BLOCK_ROWS = 512
TASK_TAG = "task"


@dataclass(frozen=True)
class PruneConfig:
    dup_threshold: float = 0.92
    outdated_threshold: float = 0.35
    params: ActivationParams = ActivationParams()

    @classmethod
    def from_settings(cls, settings: Settings) -> "PruneConfig":
        return cls(
            dup_threshold=settings.memory.dup_threshold,
            outdated_threshold=settings.outdated_threshold,
            params=settings.activation,
        )


def _link(graph: nx.Graph, a: str, b: str, kind: str) -> None:
    if a == b:
        return
    if graph.has_edge(a, b):
        graph[a][b]["kinds"].add(kind)
    else:
        graph.add_edge(a, b, kinds={kind})


def build_association_map(store: MemoryStore) -> nx.Graph:
    """
    Unit-to-unit links over every stored unit.

    Link kinds: ``entity`` (units share a Strong entity node), ``qa`` (question
    turn to the next reply by another speaker) and ``confirmation`` (a reply to
    the acknowledgment that follows it).
    """
    graph = nx.Graph()
    graph.add_nodes_from(sorted(store.units))

    for node_id in sorted(store.nodes):
        refs = sorted(
            {store.resolve_unit_id(u) for u in store.nodes[node_id].unit_refs} & store.units.keys()
        )
        if len(refs) <= ENTITY_CLIQUE_LIMIT:
            for i, a in enumerate(refs):
                for b in refs[i + 1 :]:
                    _link(graph, a, b, "entity")
        else:
            for a, b in zip(refs, refs[1:]):
                _link(graph, a, b, "entity")

    dialogues = sorted({u.dialogue for u in store.utterances.values()})
    for dialogue in dialogues:
        turns = store.dialogue_turns(dialogue)
        for index, turn in enumerate(turns):
            units = _turn_units(store, turn.unit_ids)
            if not units:
                continue
            reply = next((t for t in turns[index + 1 :] if t.speaker != turn.speaker), None)
            if reply is None:
                continue
            reply_units = _turn_units(store, reply.unit_ids)
            if turn.act == DialogueAct.QUESTION:
                for a in units:
                    for b in reply_units:
                        _link(graph, a, b, "qa")
            elif turn.act != DialogueAct.ACKNOWLEDGMENT and reply.act == DialogueAct.ACKNOWLEDGMENT:
                for a in units:
                    for b in reply_units:
                        _link(graph, a, b, "confirmation")
    return graph


def _turn_units(store: MemoryStore, unit_ids: tuple[str, ...]) -> list[str]:
    resolved = {store.resolve_unit_id(u) for u in unit_ids}
    return sorted(resolved & store.units.keys())


def _is_task(unit: MemoryUnit) -> bool:
    return unit.kind is UnitKind.FACT or TASK_TAG in unit.preference_tags


def _slot_key(unit: MemoryUnit, functional: frozenset[str]) -> tuple[str, str] | None:
    if unit.relation is not None and unit.relation.label in functional:
        return (unit.relation.head, unit.relation.label)
    return None


def _find_duplicates(
    store: MemoryStore, cfg: PruneConfig
) -> dict[str, tuple[str, float]]:
    """Live Fact unit id -> (merge target, best similarity inside its group)."""
    facts = [u for u in store.live_units() if u.kind is UnitKind.FACT]
    if len(facts) < 2:
        return {}
    matrix = np.vstack([u.embedding for u in facts])
    parent = list(range(len(facts)))
    best_sim = np.zeros(len(facts))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for start in range(0, len(facts), DUPLICATE_BLOCK_ROWS):
        block = matrix[start : start + DUPLICATE_BLOCK_ROWS] @ matrix.T
        rows, cols = np.nonzero(block >= cfg.dup_threshold)
        for row, col in zip(rows.tolist(), cols.tolist()):
            i = start + row
            if col <= i:
                continue
            a, b = facts[i], facts[col]
            slot_a = _slot_key(a, store.functional_relations)
            if slot_a is not None and slot_a == _slot_key(b, store.functional_relations):
                # Competing values for one slot are a conflict, not a duplicate.
                continue
            similarity = float(block[row, col])
            best_sim[i] = max(best_sim[i], similarity)
            best_sim[col] = max(best_sim[col], similarity)
            root_a, root_b = find(i), find(col)
            if root_a != root_b:
                parent[max(root_a, root_b)] = min(root_a, root_b)

    groups: dict[int, list[int]] = {}
    for i in range(len(facts)):
        groups.setdefault(find(i), []).append(i)

    duplicates: dict[str, tuple[str, float]] = {}
    for members in groups.values():
        if len(members) < 2:
            continue
        target = min(members, key=lambda m: (facts[m].created_at, facts[m].id))
        for member in members:
            if member != target:
                duplicates[facts[member].id] = (facts[target].id, round(float(best_sim[member]), 6))
    return duplicates


def _find_outdated(store: MemoryStore, now: int, cfg: PruneConfig) -> dict[str, tuple[str, dict]]:
    """Live unit id -> (superseding unit id, evidence)."""
    outdated: dict[str, tuple[str, dict]] = {}
    valid_by_slot: dict[tuple[str, str], list] = {}
    for edge in store.edges.values():
        if edge.validity is EdgeValidity.VALID and edge.relation_label in store.functional_relations:
            valid_by_slot.setdefault((edge.head, edge.relation_label), []).append(edge)

    for edge_id in sorted(store.edges):
        edge = store.edges[edge_id]
        if edge.validity is not EdgeValidity.FAILED or edge.relation_label not in store.functional_relations:
            continue
        newer = [
            e for e in valid_by_slot.get((edge.head, edge.relation_label), ()) if e.timestamp >= edge.timestamp
        ]
        for source_id in sorted(store.resolve_unit_id(u) for u in edge.source_units):
            unit = store.units.get(source_id)
            if unit is None or not unit.is_live:
                continue
            successors = [
                store.units[s]
                for e in newer
                for s in {store.resolve_unit_id(u) for u in e.source_units}
                if s != source_id and s in store.units and store.units[s].is_live
            ]
            if successors:
                latest = max(successors, key=lambda u: (u.created_at, u.id))
                outdated.setdefault(
                    source_id, (latest.id, {"rule": "failed_edge", "edge": edge_id})
                )

    by_key: dict[str, list[MemoryUnit]] = {}
    for unit in store.live_units():
        if unit.fact_key:
            by_key.setdefault(unit.fact_key, []).append(unit)
    for members in by_key.values():
        if len(members) < 2:
            continue
        newest = max(members, key=lambda u: (u.created_at, u.id))
        for unit in members:
            if unit.id == newest.id or unit.id in outdated:
                continue
            retention = unit_retention(unit, now, cfg.params)
            if retention < cfg.outdated_threshold:
                outdated[unit.id] = (
                    newest.id,
                    {"rule": "low_retention", "retention": round(retention, 6)},
                )
    return outdated


def classify_redundancy(
    store: MemoryStore,
    now: int,
    cfg: PruneConfig | None = None,
    association: nx.Graph | None = None,
) -> list[RedundancyVerdict]:
    """
    One verdict per live unit, ordered by unit id.

    Precedence: Duplicate > Outdated > Irrelevant > Keep.
    """
    cfg = cfg or PruneConfig()
    association = association if association is not None else build_association_map(store)
    duplicates = _find_duplicates(store, cfg)
    outdated = _find_outdated(store, now, cfg)

    turn_activation = [
        trace_activation(u.trace, now, cfg.params)
        for u in store.live_units()
        if u.kind is UnitKind.TURN
    ]
    median = float(np.median(turn_activation)) if turn_activation else 0.0

    verdicts: list[RedundancyVerdict] = []
    for unit in store.live_units():
        common = {"unit_id": unit.id, "store_version": store.version}
        if unit.id in duplicates:
            target, similarity = duplicates[unit.id]
            verdicts.append(
                RedundancyVerdict(
                    **common,
                    redundancy=RedundancyClass.DUPLICATE,
                    merge_target=target,
                    evidence={"similarity": similarity},
                )
            )
            continue
        if unit.id in outdated:
            successor, evidence = outdated[unit.id]
            verdicts.append(
                RedundancyVerdict(
                    **common,
                    redundancy=RedundancyClass.OUTDATED,
                    superseded_by=successor,
                    evidence=evidence,
                )
            )
            continue
        irrelevant = _irrelevance(store, unit, association, now, median, cfg)
        if irrelevant is not None:
            verdicts.append(
                RedundancyVerdict(**common, redundancy=RedundancyClass.IRRELEVANT, evidence=irrelevant)
            )
            continue
        verdicts.append(RedundancyVerdict(**common, redundancy=RedundancyClass.KEEP))
    return verdicts


def _irrelevance(
    store: MemoryStore,
    unit: MemoryUnit,
    association: nx.Graph,
    now: int,
    median: float,
    cfg: PruneConfig,
) -> dict | None:
    if unit.kind is not UnitKind.TURN or unit.preference_tags:
        return None
    neighbors = association[unit.id] if unit.id in association else {}
    linked = [
        other
        for other, data in neighbors.items()
        if data["kinds"] & {"entity", "qa"}
    ]
    if unit.anchors.dialogue_act is DialogueAct.ACKNOWLEDGMENT and not linked:
        return {"rule": "confirmation", "degree": 0}
    if any(_is_task(store.units[other]) for other in linked if other in store.units):
        return None
    activation = trace_activation(unit.trace, now, cfg.params)
    if activation < median:
        return {"rule": "chit_chat", "degree": len(linked), "activation": round(activation, 6)}
    return None


def _fuse(store: MemoryStore, target: MemoryUnit, members: list[MemoryUnit]) -> MemoryUnit:
    """Target enriched with its members: longest content, unioned provenance and traces."""
    everyone = [target, *members]
    longest = min(everyone, key=lambda u: (-len(u.content), u.id != target.id, u.id))
    provenance = list(target.provenance)
    trace = target.trace
    keys = set(target.merged_keys)
    tags = set(target.preference_tags)
    for member in members:
        provenance.extend(member.provenance)
        trace = merge_traces(trace, member.trace, store.params.history_cap)
        keys |= member.keys
        tags |= set(member.preference_tags)
    keys.discard(target.fact_key)
    updates = {
        "provenance": tuple(dict.fromkeys(provenance)),
        "trace": trace,
        "merged_keys": tuple(sorted(keys)),
        "preference_tags": tuple(sorted(tags)),
        "emotion_weight": max(u.emotion_weight for u in everyone),
    }
    if longest.content != target.content:
        updates["content"] = longest.content
        updates["embedding"] = longest.embedding
    return target.model_copy(update=updates)


def compression_summary(unit: MemoryUnit, superseded_by: str | None) -> str:
    key = unit.fact_key or unit.content
    pointer = f" -> {superseded_by}" if superseded_by else ""
    return f"[compressed {unit.id}] {key} @ {unit.created_at}{pointer}"


def compress_unit(store: MemoryStore, unit: MemoryUnit, now: int, superseded_by: str | None) -> MemoryUnit:
    """Retire ``unit`` into Compressed with a one-line summary and supersession pointer."""
    summary = compression_summary(unit, superseded_by)
    compressed = unit.retire(
        LifecycleState.COMPRESSED,
        now,
        content=summary,
        embedding=store.embedder.embed(summary),
        superseded_by=superseded_by,
    )
    store.replace_unit(compressed)
    return compressed


def live_tokens(store: MemoryStore) -> int:
    return sum(u.token_count for u in store.units.values() if u.is_live)


def refine(
    verdicts: list[RedundancyVerdict], store: MemoryStore, now: int | None = None
) -> PruneReport:
    """
    Apply verdicts: fuse duplicates, compress outdated units, soft-delete irrelevant ones.

    Raises:
        StaleVerdicts: If the store changed since the verdicts were computed
    """
    stale = [v.unit_id for v in verdicts if v.store_version != store.version]
    if stale:
        raise StaleVerdicts(
            f"{len(stale)} verdict(s) predate store version {store.version}; classify again"
        )
    when = now if now is not None else max((u.trace.last_access for u in store.units.values()), default=0)
    report = PruneReport(tokens_before=live_tokens(store))

    groups: dict[str, list[str]] = {}
    for verdict in verdicts:
        if verdict.redundancy is RedundancyClass.DUPLICATE and verdict.merge_target:
            groups.setdefault(verdict.merge_target, []).append(verdict.unit_id)
    for target_id in sorted(groups):
        target = store.units[target_id]
        members = [store.units[m] for m in sorted(groups[target_id]) if m in store.units]
        store.replace_unit(_fuse(store, target, members))
        store.index_content(target.kind, target.content, target_id)
        for member in members:
            store.absorb_unit(member.id, target_id)
        report.units_merged += len(members)
        report.merges.append({"target": target_id, "absorbed": [m.id for m in members]})

    for verdict in verdicts:
        unit = store.units.get(verdict.unit_id)
        if unit is None or not unit.is_live:
            continue
        if verdict.redundancy is RedundancyClass.OUTDATED:
            successor = store.resolve_unit_id(verdict.superseded_by) if verdict.superseded_by else None
            compress_unit(store, unit, when, successor)
            report.units_compressed += 1
        elif verdict.redundancy is RedundancyClass.IRRELEVANT:
            store.replace_unit(unit.retire(LifecycleState.SOFT_DELETED, when))
            report.units_removed += 1

    report.tokens_after = live_tokens(store)
    if report.mutation_count:
        logger.info(
            "Pruned space %s: merged=%d compressed=%d removed=%d tokens %d -> %d",
            store.space_id,
            report.units_merged,
            report.units_compressed,
            report.units_removed,
            report.tokens_before,
            report.tokens_after,
        )
    return report


def prune(store: MemoryStore, now: int, cfg: PruneConfig | None = None) -> PruneReport:
    """classify_redundancy followed by refine."""
    return refine(classify_redundancy(store, now, cfg), store, now)
