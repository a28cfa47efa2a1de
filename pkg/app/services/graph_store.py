"""In-memory store of one memory space: units, knowledge graph and dialogue turns.

The store is the single source of truth while a space is loaded. Every mutation
marks the touched elements dirty; ``drain_changes()`` hands them to the
persistence layer as log records, so the SQLite log and the store never diverge
within a committed write.
"""

from __future__ import annotations

import copy
import logging
from collections import Counter
from collections.abc import Iterable, Iterator
from pathlib import Path

import networkx as nx
import numpy as np

from app.config import DEFAULT_FUNCTIONAL_RELATIONS
from app.errors import SpaceUnknown, UnknownNode, UnknownUnit
from app.models.activation import ActivationParams
from app.models.graph import (
    EdgeValidity,
    GraphEdge,
    GraphNode,
    NodeKind,
    NodeMergeAction,
    Utterance,
)
from app.models.memory import LifecycleState, MemoryUnit, Relation
from app.models.records import LogRecord
from app.services.activation_service import merge_traces
from app.utils.embedding import EmbeddingProvider, get_embedder
from app.utils.text import normalize

logger = logging.getLogger(__name__)

ID_PREFIXES = {"unit": "u", "node": "n", "edge": "e", "utterance": "t"}
MERGE_BLOCK_ROWS = 512
def _tags(values: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(set(values)))


VALIDITY_RANK = {EdgeValidity.FAILED: 0, EdgeValidity.WEAKENED: 1, EdgeValidity.VALID: 2}


class MemoryStore:
    """Units, nodes, edges and utterances of one memory space."""

    def __init__(
        self,
        space_id: str,
        *,
        functional_relations: Iterable[str] = DEFAULT_FUNCTIONAL_RELATIONS,
        embedder: EmbeddingProvider | None = None,
        params: ActivationParams | None = None,
    ):
        self.space_id = space_id
        self.functional_relations = frozenset(functional_relations)
        self.embedder = embedder or get_embedder()
        self.params = params or ActivationParams()

        self.units: dict[str, MemoryUnit] = {}
        self.unit_aliases: dict[str, str] = {}
        self.nodes: dict[str, GraphNode] = {}
        self.node_aliases: dict[str, str] = {}
        self.edges: dict[str, GraphEdge] = {}
        self.utterances: dict[str, Utterance] = {}
        self.graph = nx.MultiDiGraph()

        self._content_index: dict[tuple[str, str], str] = {}
        self._label_index: dict[str, str] = {}
        self._edge_index: dict[tuple[str, str, str], str] = {}
        self._unit_nodes: dict[str, set[str]] = {}
        self._unit_edges: dict[str, set[str]] = {}

        self.counters: Counter[str] = Counter()
        self.version = 0
        self.index_version = 0
        self.graph_version = 0
        self.generation = 0
        self.path_hits: Counter[str] = Counter()
        self.applied_envelopes: set[str] = set()

        self._dirty: set[tuple[str, str]] = set()
        self._meta_dirty = False
        self._valid_view: tuple[int, nx.MultiGraph] | None = None
        self.trace_journal: list[str] = []
        self.scan_cache: object | None = None

    # ------------------------------------------------------------------ ids

    def _next_id(self, kind: str) -> str:
        self.counters[kind] += 1
        return f"{ID_PREFIXES[kind]}{self.counters[kind]:06d}"

    def _touch(self, kind: str, record_id: str, *, index: bool = False, graph: bool = False) -> None:
        self.version += 1
        self._meta_dirty = True
        self._dirty.add((kind, record_id))
        if index:
            self.index_version += 1
        if graph:
            self.graph_version += 1

    def mark_meta_dirty(self) -> None:
        self.version += 1
        self._meta_dirty = True

    # ---------------------------------------------------------------- units

    def resolve_unit_id(self, unit_id: str) -> str:
        seen = set()
        while unit_id in self.unit_aliases and unit_id not in seen:
            seen.add(unit_id)
            unit_id = self.unit_aliases[unit_id]
        return unit_id

    def get_unit(self, unit_id: str) -> MemoryUnit:
        resolved = self.resolve_unit_id(unit_id)
        unit = self.units.get(resolved)
        if unit is None:
            raise UnknownUnit(f"unknown unit {unit_id!r}")
        return unit

    def find_by_content(self, kind: str, content: str) -> MemoryUnit | None:
        unit_id = self._content_index.get((str(kind), normalize(content)))
        return self.units.get(unit_id) if unit_id else None

    def index_content(self, kind: str, content: str, unit_id: str) -> None:
        """Route future upserts of ``content`` to ``unit_id``."""
        self._content_index[(str(kind), normalize(content))] = unit_id

    def iter_units(self, states: Iterable[LifecycleState] | None = None) -> Iterator[MemoryUnit]:
        wanted = set(states) if states is not None else None
        for unit_id in sorted(self.units):
            unit = self.units[unit_id]
            if wanted is None or unit.state in wanted:
                yield unit

    def live_units(self) -> list[MemoryUnit]:
        return [u for u in self.iter_units() if u.is_live]

    def upsert_unit(self, unit: MemoryUnit) -> str:
        """
        Insert a unit, or fold it into the existing unit with identical content.

        Returns:
            The stored unit id

        Raises:
            SpaceUnknown: If the unit belongs to another space
        """
        if unit.space_id != self.space_id:
            raise SpaceUnknown(f"unit targets space {unit.space_id!r}, store is {self.space_id!r}")

        existing = self.find_by_content(unit.kind, unit.content)
        if existing is not None:
            self._fold_duplicate(existing, unit)
            return existing.id

        unit_id = self._next_id("unit")
        stored = unit.model_copy(update={"id": unit_id})
        self.units[unit_id] = stored
        self._content_index[(str(stored.kind), stored.content)] = unit_id
        self._unit_nodes[unit_id] = set()
        self._unit_edges[unit_id] = set()
        self._link_graph(stored)
        self.trace_journal.append(unit_id)
        self._touch("unit", unit_id, index=True, graph=True)
        return unit_id

    def _fold_duplicate(self, existing: MemoryUnit, incoming: MemoryUnit) -> None:
        provenance = tuple(dict.fromkeys([*existing.provenance, *incoming.provenance]))
        if not existing.is_live:
            # Soft-deleted and compressed units only gain provenance.
            self.units[existing.id] = existing.model_copy(update={"provenance": provenance})
            self._touch("unit", existing.id)
            return

        updates = {
            "provenance": provenance,
            "trace": merge_traces(existing.trace, incoming.trace, self.params.history_cap),
            "emotion_weight": max(existing.emotion_weight, incoming.emotion_weight),
            "preference_tags": _tags([*existing.preference_tags, *incoming.preference_tags]),
        }
        if existing.state is LifecycleState.PENDING_FORGET:
            merged = existing.transition(LifecycleState.ACTIVE, **updates)
        else:
            merged = existing.model_copy(update=updates)
        self.units[existing.id] = merged
        self.trace_journal.append(existing.id)

        for edge_id in sorted(self._unit_edges.get(existing.id, ())):
            edge = self.edges[edge_id]
            refreshed = {"timestamp": max(edge.timestamp, incoming.created_at)}
            if edge.validity is EdgeValidity.FAILED:
                refreshed.update(strength=1.0, validity=EdgeValidity.VALID, weakened_at=None)
            self.set_edge(edge.model_copy(update=refreshed))
        self._touch("unit", existing.id, index=existing.state is LifecycleState.PENDING_FORGET)

    def replace_unit(self, unit: MemoryUnit) -> None:
        """Store a new version of an existing unit."""
        previous = self.units.get(unit.id)
        if previous is None:
            raise UnknownUnit(f"unknown unit {unit.id!r}")
        self.units[unit.id] = unit
        index_changed = (
            previous.content != unit.content
            or previous.state is not unit.state
            or previous.embedding is not unit.embedding
            or previous.preference_tags != unit.preference_tags
            or previous.emotion_weight != unit.emotion_weight
        )
        if previous.content != unit.content or previous.kind is not unit.kind:
            key = (str(previous.kind), previous.content)
            if self._content_index.get(key) == unit.id:
                del self._content_index[key]
            self._content_index.setdefault((str(unit.kind), unit.content), unit.id)
        if previous.trace != unit.trace:
            self.trace_journal.append(unit.id)
        self._touch("unit", unit.id, index=index_changed)

    def absorb_unit(self, absorbed_id: str, target_id: str) -> None:
        """Remove ``absorbed_id`` from the live tables; lookups resolve to ``target_id``."""
        absorbed = self.units.pop(absorbed_id, None)
        if absorbed is None:
            raise UnknownUnit(f"unknown unit {absorbed_id!r}")
        if target_id not in self.units:
            raise UnknownUnit(f"unknown unit {target_id!r}")
        key = (str(absorbed.kind), absorbed.content)
        if self._content_index.get(key) == absorbed_id:
            self._content_index[key] = target_id
        self.unit_aliases[absorbed_id] = target_id
        for alias, points_to in list(self.unit_aliases.items()):
            if points_to == absorbed_id:
                self.unit_aliases[alias] = target_id

        for node_id in self._unit_nodes.pop(absorbed_id, set()):
            node = self.nodes[node_id]
            refs = (set(node.unit_refs) - {absorbed_id}) | {target_id}
            self._set_node(node.model_copy(update={"unit_refs": _tags(refs)}))
            self._unit_nodes.setdefault(target_id, set()).add(node_id)
        for edge_id in self._unit_edges.pop(absorbed_id, set()):
            edge = self.edges[edge_id]
            sources = (set(edge.source_units) - {absorbed_id}) | {target_id}
            self.set_edge(edge.model_copy(update={"source_units": _tags(sources)}))
            self._unit_edges.setdefault(target_id, set()).add(edge_id)

        self._dirty.add(("unit_alias", absorbed_id))
        self._touch("unit", absorbed_id, index=True, graph=True)

    def remove_unit(self, unit_id: str) -> None:
        """Hard delete (purge). Nodes and edges left without references go too."""
        unit = self.units.pop(unit_id, None)
        if unit is None:
            raise UnknownUnit(f"unknown unit {unit_id!r}")
        key = (str(unit.kind), unit.content)
        if self._content_index.get(key) == unit_id:
            del self._content_index[key]
        for alias, target in list(self.unit_aliases.items()):
            if target == unit_id:
                del self.unit_aliases[alias]
                self._touch("unit_alias", alias)

        for edge_id in sorted(self._unit_edges.pop(unit_id, set())):
            edge = self.edges[edge_id]
            sources = set(edge.source_units) - {unit_id}
            if sources:
                self.set_edge(edge.model_copy(update={"source_units": _tags(sources)}))
            else:
                self._drop_edge(edge_id)
        for node_id in sorted(self._unit_nodes.pop(unit_id, set())):
            node = self.nodes[node_id]
            refs = set(node.unit_refs) - {unit_id}
            if refs:
                self._set_node(node.model_copy(update={"unit_refs": _tags(refs)}))
            elif not any(True for _ in self.graph.edges(node_id)) and not any(
                True for _ in self.graph.in_edges(node_id)
            ):
                self._drop_node(node_id)
            else:
                self._set_node(node.model_copy(update={"unit_refs": ()}))
        for utterance in self.utterances.values():
            if unit_id in utterance.unit_ids:
                self.set_utterance(
                    utterance.model_copy(
                        update={"unit_ids": tuple(u for u in utterance.unit_ids if u != unit_id)}
                    )
                )
        self._touch("unit", unit_id, index=True, graph=True)

    def note_access(self, unit: MemoryUnit) -> None:
        """Store a unit whose only change is its trace or a re-activation."""
        self.replace_unit(unit)

    # ---------------------------------------------------------------- graph

    def resolve_node_id(self, node_id: str) -> str:
        seen = set()
        while node_id in self.node_aliases and node_id not in seen:
            seen.add(node_id)
            node_id = self.node_aliases[node_id]
        return node_id

    def node_for_label(self, label: str) -> GraphNode | None:
        node_id = self._label_index.get(normalize(label))
        return self.nodes.get(self.resolve_node_id(node_id)) if node_id else None

    def require_node(self, label_or_id: str) -> GraphNode:
        """Resolve a node by id or label; raises UnknownNode."""
        resolved = self.resolve_node_id(label_or_id)
        if resolved in self.nodes:
            return self.nodes[resolved]
        node = self.node_for_label(label_or_id)
        if node is None:
            raise UnknownNode(f"unknown node {label_or_id!r}")
        return node

    def _set_node(self, node: GraphNode) -> None:
        self.nodes[node.id] = node
        self._touch("node", node.id)

    def _drop_node(self, node_id: str) -> None:
        node = self.nodes.pop(node_id)
        for label in (node.label, *node.aliases):
            if self._label_index.get(label) == node_id:
                del self._label_index[label]
        if self.graph.has_node(node_id):
            self.graph.remove_node(node_id)
        self._touch("node", node_id, graph=True)

    def ensure_node(self, label: str, kind: NodeKind, unit_id: str | None, now: int) -> str:
        """Node for ``label`` (aliases included), created if absent; ``unit_id`` joins its refs."""
        normalized = normalize(label)
        node = self.node_for_label(normalized)
        if node is None:
            return self.add_node(normalized, kind, unit_id, now)
        if unit_id and unit_id not in node.unit_refs:
            self._set_node(node.model_copy(update={"unit_refs": _tags([*node.unit_refs, unit_id])}))
            self._unit_nodes.setdefault(unit_id, set()).add(node.id)
        return node.id

    def add_node(self, label: str, kind: NodeKind, unit_id: str | None, now: int) -> str:
        """Always create a node, even when the label is taken (duplicate ingestion paths)."""
        normalized = normalize(label)
        node_id = self._next_id("node")
        refs = (unit_id,) if unit_id else ()
        self.nodes[node_id] = GraphNode(
            id=node_id, label=normalized, kind=kind, unit_refs=refs, created_at=now
        )
        self._label_index.setdefault(normalized, node_id)
        self.graph.add_node(node_id)
        if unit_id:
            self._unit_nodes.setdefault(unit_id, set()).add(node_id)
        self._touch("node", node_id, graph=True)
        return node_id

    def set_edge(self, edge: GraphEdge) -> None:
        previous = self.edges.get(edge.id)
        self.edges[edge.id] = edge
        graph_changed = previous is None or previous.validity is not edge.validity or (
            previous.strength != edge.strength
        )
        if previous is not None and previous.key != edge.key:
            self._edge_index.pop(previous.key, None)
            self.graph.remove_edge(previous.head, previous.tail, key=edge.id)
            graph_changed = True
        if previous is None or previous.key != edge.key:
            self._edge_index[edge.key] = edge.id
            self.graph.add_edge(edge.head, edge.tail, key=edge.id, label=edge.relation_label)
        self._touch("edge", edge.id, graph=graph_changed)

    def _drop_edge(self, edge_id: str) -> None:
        edge = self.edges.pop(edge_id)
        if self._edge_index.get(edge.key) == edge_id:
            del self._edge_index[edge.key]
        if self.graph.has_edge(edge.head, edge.tail, key=edge_id):
            self.graph.remove_edge(edge.head, edge.tail, key=edge_id)
        for sources in self._unit_edges.values():
            sources.discard(edge_id)
        self.path_hits.pop(edge_id, None)
        self._touch("edge", edge_id, graph=True)

    def add_edge(self, relation: Relation, unit: MemoryUnit, *, head_id: str, tail_id: str) -> str:
        """Create or refresh the edge ``head -label-> tail`` sourced by ``unit``."""
        key = (head_id, relation.label, tail_id)
        edge_id = self._edge_index.get(key)
        if edge_id is not None:
            edge = self.edges[edge_id]
            updates: dict = {
                "source_units": _tags([*edge.source_units, unit.id]),
                "timestamp": max(edge.timestamp, unit.created_at),
                "emotion_weight": max(edge.emotion_weight, unit.emotion_weight),
            }
            if edge.validity is EdgeValidity.FAILED:
                updates.update(strength=1.0, validity=EdgeValidity.VALID, weakened_at=None)
            self.set_edge(edge.model_copy(update=updates))
        else:
            edge_id = self._next_id("edge")
            self.set_edge(
                GraphEdge(
                    id=edge_id,
                    head=head_id,
                    tail=tail_id,
                    relation_label=relation.label,
                    source=unit.source or unit.provenance[0],
                    source_units=(unit.id,),
                    timestamp=unit.created_at,
                    emotion_weight=unit.emotion_weight,
                )
            )
        self._unit_edges.setdefault(unit.id, set()).add(edge_id)
        return edge_id

    def _link_graph(self, unit: MemoryUnit) -> None:
        """Nodes for the unit's Strong entities and edges for its relations."""
        for entity in unit.anchors.strong_entities:
            kind = NodeKind.EVENT if entity.category == "temporal" else NodeKind.ENTITY
            self.ensure_node(entity.surface, kind, unit.id, unit.created_at)
        relations = list(unit.anchors.relations)
        if unit.relation is not None and unit.relation not in relations:
            relations.append(unit.relation)
        for relation in relations:
            head_id = self.ensure_node(relation.head, NodeKind.ENTITY, unit.id, unit.created_at)
            tail_id = self.ensure_node(relation.tail, NodeKind.ENTITY, unit.id, unit.created_at)
            self.add_edge(relation, unit, head_id=head_id, tail_id=tail_id)

    def nodes_of_unit(self, unit_id: str) -> set[str]:
        return set(self._unit_nodes.get(self.resolve_unit_id(unit_id), ()))

    def edges_of_unit(self, unit_id: str) -> set[str]:
        return set(self._unit_edges.get(self.resolve_unit_id(unit_id), ()))

    def valid_graph(self) -> nx.MultiGraph:
        """Undirected view over Valid edges; cached per graph version."""
        if self._valid_view is not None and self._valid_view[0] == self.graph_version:
            return self._valid_view[1]
        view = nx.MultiGraph()
        view.add_nodes_from(self.nodes)
        for edge_id in sorted(self.edges):
            edge = self.edges[edge_id]
            if edge.validity is EdgeValidity.VALID:
                view.add_edge(edge.head, edge.tail, key=edge_id, strength=edge.strength)
        self._valid_view = (self.graph_version, view)
        return view

    def merge_similar_nodes(self, threshold: float) -> list[NodeMergeAction]:
        """
        Merge same-kind nodes whose label embeddings reach ``threshold`` cosine.

        Pairs are processed by (similarity desc, ids asc); the earlier-created
        node survives. A second pass at the same threshold finds nothing.
        """
        if not 0.0 < threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        node_ids = sorted(self.nodes)
        if len(node_ids) < 2:
            return []
        matrix = np.vstack([self.embedder.embed(self.nodes[n].label) for n in node_ids])
        kinds = np.array([str(self.nodes[n].kind) for n in node_ids])

        pairs: list[tuple[float, str, str]] = []
        for start in range(0, len(node_ids), MERGE_BLOCK_ROWS):
            block = matrix[start : start + MERGE_BLOCK_ROWS] @ matrix.T
            rows, cols = np.nonzero(block >= threshold - 1e-12)
            for row, col in zip(rows.tolist(), cols.tolist()):
                i = start + row
                if col <= i or kinds[i] != kinds[col]:
                    continue
                pairs.append((float(block[row, col]), node_ids[i], node_ids[col]))
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))

        actions: list[NodeMergeAction] = []
        for similarity, first, second in pairs:
            a = self.resolve_node_id(first)
            b = self.resolve_node_id(second)
            if a == b:
                continue
            kept, absorbed = (a, b) if a < b else (b, a)
            kept_label = self.nodes[kept].label
            absorbed_label = self.nodes[absorbed].label
            self._absorb_node(kept, absorbed)
            actions.append(
                NodeMergeAction(
                    kept=kept,
                    absorbed=absorbed,
                    similarity=min(1.0, similarity),
                    kept_label=kept_label,
                    absorbed_label=absorbed_label,
                )
            )
        if actions:
            logger.info("Merged %d node pair(s) in space %s", len(actions), self.space_id)
        return actions

    def _absorb_node(self, kept_id: str, absorbed_id: str) -> None:
        kept = self.nodes[kept_id]
        absorbed = self.nodes.pop(absorbed_id)
        labels = {absorbed.label, *absorbed.aliases} - {kept.label}
        self.nodes[kept_id] = kept.model_copy(
            update={
                "unit_refs": _tags([*kept.unit_refs, *absorbed.unit_refs]),
                "aliases": _tags([*kept.aliases, *labels]),
            }
        )
        for label in labels | {absorbed.label}:
            self._label_index[label] = kept_id
        self.node_aliases[absorbed_id] = kept_id
        for alias, target in list(self.node_aliases.items()):
            if target == absorbed_id:
                self.node_aliases[alias] = kept_id
        for unit_id in absorbed.unit_refs:
            refs = self._unit_nodes.setdefault(unit_id, set())
            refs.discard(absorbed_id)
            refs.add(kept_id)

        touching = sorted(
            edge_id
            for edge_id, edge in self.edges.items()
            if absorbed_id in (edge.head, edge.tail)
        )
        for edge_id in touching:
            edge = self.edges[edge_id]
            head = kept_id if edge.head == absorbed_id else edge.head
            tail = kept_id if edge.tail == absorbed_id else edge.tail
            other_id = self._edge_index.get((head, edge.relation_label, tail))
            if other_id is not None and other_id != edge_id:
                self._fold_edge(other_id, edge)
                self._drop_edge(edge_id)
            else:
                self.set_edge(edge.model_copy(update={"head": head, "tail": tail}))
        if self.graph.has_node(absorbed_id):
            self.graph.remove_node(absorbed_id)
        self._dirty.add(("node_alias", absorbed_id))
        self._touch("node", kept_id, graph=True)
        self._touch("node", absorbed_id, graph=True)

    def _fold_edge(self, target_id: str, folded: GraphEdge) -> None:
        target = self.edges[target_id]
        best = max(
            (target, folded), key=lambda e: (VALIDITY_RANK[e.validity], e.strength)
        )
        self.set_edge(
            target.model_copy(
                update={
                    "source_units": _tags([*target.source_units, *folded.source_units]),
                    "timestamp": max(target.timestamp, folded.timestamp),
                    "emotion_weight": max(target.emotion_weight, folded.emotion_weight),
                    "strength": best.strength,
                    "validity": best.validity,
                    "weakened_at": best.weakened_at,
                }
            )
        )
        for unit_id in folded.source_units:
            self._unit_edges.setdefault(unit_id, set()).add(target_id)
        if folded.id in self.path_hits:
            self.path_hits[target_id] += self.path_hits[folded.id]

    def fail_edge(self, edge_id: str) -> None:
        edge = self.edges[edge_id]
        if edge.validity is not EdgeValidity.FAILED:
            self.set_edge(edge.model_copy(update={"strength": 0.0, "validity": EdgeValidity.FAILED}))

    def detect_failed_edges(self, now: int) -> list[str]:
        """
        Mark edges Failed by latest-wins over functional relations, or when
        every source unit is SoftDeleted.

        Returns:
            Sorted ids of edges newly marked Failed
        """
        failed: set[str] = set()
        slots: dict[tuple[str, str], list[GraphEdge]] = {}
        for edge in self.edges.values():
            if edge.validity is EdgeValidity.FAILED:
                continue
            if edge.relation_label in self.functional_relations:
                slots.setdefault((edge.head, edge.relation_label), []).append(edge)
            sources = [self.units.get(self.resolve_unit_id(u)) for u in edge.source_units]
            sources = [u for u in sources if u is not None]
            if sources and all(u.state is LifecycleState.SOFT_DELETED for u in sources):
                failed.add(edge.id)

        for group in slots.values():
            if len(group) < 2:
                continue
            latest = max(group, key=lambda e: (e.timestamp, e.id))
            failed.update(e.id for e in group if e.id != latest.id and e.tail != latest.tail)

        for edge_id in sorted(failed):
            self.fail_edge(edge_id)
        if failed:
            logger.info(
                "Detected %d failed edge(s) in space %s at %s", len(failed), self.space_id, now
            )
        return sorted(failed)

    # ----------------------------------------------------------- utterances

    def add_utterance(
        self, text: str, speaker: str, ts: int, *, dialogue: str = "default", act: str = "statement"
    ) -> Utterance:
        utterance_id = self._next_id("utterance")
        utterance = Utterance(
            id=utterance_id,
            seq=self.counters["utterance"],
            dialogue=dialogue,
            speaker=speaker,
            text=text,
            ts=ts,
            act=act,
        )
        self.set_utterance(utterance)
        return utterance

    def set_utterance(self, utterance: Utterance) -> None:
        self.utterances[utterance.id] = utterance
        self._touch("utterance", utterance.id)

    def dialogue_turns(self, dialogue: str) -> list[Utterance]:
        return sorted(
            (u for u in self.utterances.values() if u.dialogue == dialogue), key=lambda u: u.seq
        )

    # ---------------------------------------------------------- persistence

    def _meta_record(self) -> LogRecord:
        return LogRecord(
            kind="meta",
            record_id=self.space_id,
            payload={
                "space_id": self.space_id,
                "counters": dict(sorted(self.counters.items())),
                "generation": self.generation,
                "version": self.version,
                "applied_envelopes": sorted(self.applied_envelopes),
                "path_hits": dict(sorted(self.path_hits.items())),
            },
        )

    def _record(self, kind: str, record_id: str) -> LogRecord:
        payload = None
        if kind == "unit" and record_id in self.units:
            payload = self.units[record_id].model_dump(mode="json")
        elif kind == "unit_alias" and record_id in self.unit_aliases:
            payload = {"target": self.unit_aliases[record_id]}
        elif kind == "node" and record_id in self.nodes:
            payload = self.nodes[record_id].model_dump(mode="json")
        elif kind == "node_alias" and record_id in self.node_aliases:
            payload = {"target": self.node_aliases[record_id]}
        elif kind == "edge" and record_id in self.edges:
            payload = self.edges[record_id].model_dump(mode="json")
        elif kind == "utterance" and record_id in self.utterances:
            payload = self.utterances[record_id].model_dump(mode="json")
        return LogRecord(kind=kind, record_id=record_id, payload=payload)

    @property
    def has_changes(self) -> bool:
        return bool(self._dirty) or self._meta_dirty

    def drain_changes(self) -> list[LogRecord]:
        """Records for everything mutated since the last drain, canonically ordered."""
        records = [self._record(kind, record_id) for kind, record_id in self._dirty]
        # Absorbed units are represented by their alias record only.
        records = [
            r
            for r in records
            if not (r.kind == "unit" and r.payload is None and r.record_id in self.unit_aliases)
            and not (r.kind == "node" and r.payload is None and r.record_id in self.node_aliases)
        ]
        if self._meta_dirty or records:
            records.append(self._meta_record())
        self._dirty.clear()
        self._meta_dirty = False
        return sorted(records, key=LogRecord.sort_key)

    def to_records(self) -> list[LogRecord]:
        """Complete, canonically sorted record set of the store."""
        records = [self._meta_record()]
        records += [self._record("utterance", i) for i in self.utterances]
        records += [self._record("unit", i) for i in self.units]
        records += [self._record("unit_alias", i) for i in self.unit_aliases]
        records += [self._record("node", i) for i in self.nodes]
        records += [self._record("node_alias", i) for i in self.node_aliases]
        records += [self._record("edge", i) for i in self.edges]
        return sorted(records, key=LogRecord.sort_key)

    @classmethod
    def from_records(
        cls,
        records: Iterable[LogRecord],
        space_id: str | None = None,
        **kwargs,
    ) -> "MemoryStore":
        """Rebuild a store; later records for the same element win, tombstones delete."""
        latest: dict[tuple[str, str], LogRecord] = {}
        for record in records:
            latest[(record.kind, record.record_id)] = record
        meta = next((r for (kind, _), r in latest.items() if kind == "meta" and r.payload), None)
        resolved_space = space_id or (meta.payload["space_id"] if meta else None)
        if not resolved_space:
            raise SpaceUnknown("records carry no space id")
        store = cls(resolved_space, **kwargs)

        for record in sorted(latest.values(), key=LogRecord.sort_key):
            if record.payload is None:
                continue
            if record.kind == "utterance":
                utterance = Utterance.model_validate(record.payload)
                store.utterances[utterance.id] = utterance
            elif record.kind == "unit":
                unit = MemoryUnit.model_validate(record.payload)
                store.units[unit.id] = unit
            elif record.kind == "unit_alias":
                store.unit_aliases[record.record_id] = record.payload["target"]
            elif record.kind == "node":
                node = GraphNode.model_validate(record.payload)
                store.nodes[node.id] = node
            elif record.kind == "node_alias":
                store.node_aliases[record.record_id] = record.payload["target"]
            elif record.kind == "edge":
                edge = GraphEdge.model_validate(record.payload)
                store.edges[edge.id] = edge

        for alias in store.unit_aliases:
            store.units.pop(alias, None)
        for alias in store.node_aliases:
            store.nodes.pop(alias, None)
        store._rebuild_indexes()

        if meta is not None:
            store.counters = Counter(meta.payload.get("counters", {}))
            store.generation = int(meta.payload.get("generation", 0))
            store.version = int(meta.payload.get("version", 0))
            store.applied_envelopes = set(meta.payload.get("applied_envelopes", ()))
            store.path_hits = Counter(meta.payload.get("path_hits", {}))
        store._dirty.clear()
        store._meta_dirty = False
        return store

    def _rebuild_indexes(self) -> None:
        self._content_index.clear()
        self._label_index.clear()
        self._edge_index.clear()
        self._unit_nodes = {unit_id: set() for unit_id in self.units}
        self._unit_edges = {unit_id: set() for unit_id in self.units}
        self.graph = nx.MultiDiGraph()
        for unit_id in sorted(self.units):
            unit = self.units[unit_id]
            self._content_index.setdefault((str(unit.kind), unit.content), unit_id)
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            self.graph.add_node(node_id)
            for label in (node.label, *node.aliases):
                self._label_index.setdefault(label, node_id)
            for unit_id in node.unit_refs:
                self._unit_nodes.setdefault(unit_id, set()).add(node_id)
        for alias, target in self.node_aliases.items():
            if target in self.nodes:
                for label in (self.nodes[target].label, *self.nodes[target].aliases):
                    self._label_index[label] = target
        for edge_id in sorted(self.edges):
            edge = self.edges[edge_id]
            self._edge_index[edge.key] = edge_id
            self.graph.add_edge(edge.head, edge.tail, key=edge_id, label=edge.relation_label)
            for unit_id in edge.source_units:
                self._unit_edges.setdefault(unit_id, set()).add(edge_id)
        self.index_version += 1
        self.graph_version += 1
        self._valid_view = None
        self.scan_cache = None
        self.trace_journal = []

    def snapshot(self, path: str | Path) -> Path:
        from app.database.snapshot import write_snapshot

        return write_snapshot(self, path)

    @classmethod
    def load(cls, path: str | Path, **kwargs) -> "MemoryStore":
        from app.database.snapshot import read_snapshot

        return cls.from_records(read_snapshot(path), **kwargs)

    def clone(self) -> "MemoryStore":
        """Independent copy sharing the immutable units, nodes and edges."""
        twin = copy.copy(self)
        twin.units = dict(self.units)
        twin.unit_aliases = dict(self.unit_aliases)
        twin.nodes = dict(self.nodes)
        twin.node_aliases = dict(self.node_aliases)
        twin.edges = dict(self.edges)
        twin.utterances = dict(self.utterances)
        twin.graph = self.graph.copy()
        twin._content_index = dict(self._content_index)
        twin._label_index = dict(self._label_index)
        twin._edge_index = dict(self._edge_index)
        twin._unit_nodes = {k: set(v) for k, v in self._unit_nodes.items()}
        twin._unit_edges = {k: set(v) for k, v in self._unit_edges.items()}
        twin.counters = Counter(self.counters)
        twin.path_hits = Counter(self.path_hits)
        twin.applied_envelopes = set(self.applied_envelopes)
        twin._dirty = set(self._dirty)
        twin._valid_view = None
        twin.scan_cache = None
        twin.trace_journal = []
        return twin

    def __len__(self) -> int:
        return len(self.units)
