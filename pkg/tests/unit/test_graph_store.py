"""Unit tests for the memory store and its knowledge graph."""

import pytest

from app.errors import SpaceUnknown, UnknownNode, UnknownUnit
from app.models.graph import EdgeValidity
from app.models.memory import LifecycleState, Relation
from app.services.graph_store import MemoryStore


def edges_labeled(store: MemoryStore, label: str):
    return sorted((e for e in store.edges.values() if e.relation_label == label), key=lambda e: e.id)


class TestUpsert:
    """Insert, idempotence and graph linking."""

    def test_identical_content_folds_into_one_unit(self, store, remember):
        first = remember(store, "I own a red bicycle.", 10)
        second = remember(store, "I own a red bicycle.", 20)

        assert first.fact_unit_ids == second.fact_unit_ids
        unit = store.get_unit(first.fact_unit_ids[0])
        assert unit.provenance == (first.utterance_id, second.utterance_id)
        assert unit.trace.retrieval_times == (10, 20)
        assert len(store) == 1

    def test_relation_creates_nodes_and_edge(self, store, remember):
        receipt = remember(store, "I own a red bicycle.", 10)

        owner = store.node_for_label("user")
        bicycle = store.node_for_label("red bicycle")
        assert owner is not None and bicycle is not None
        (edge,) = edges_labeled(store, "owns")
        assert (edge.head, edge.tail) == (owner.id, bicycle.id)
        assert edge.source_units == tuple(receipt.fact_unit_ids)
        assert edge.validity is EdgeValidity.VALID

    def test_distinct_units_get_distinct_ids(self, store, make_unit):
        ids = {store.upsert_unit(make_unit(store, f"fact number {i}", 100 + i)) for i in range(1000)}

        assert len(ids) == 1000
        assert len(store) == 1000

    def test_unit_for_another_space_is_rejected(self, store, make_unit):
        other = MemoryStore("elsewhere")
        with pytest.raises(SpaceUnknown):
            store.upsert_unit(make_unit(other, "a fact"))

    def test_unknown_unit(self, store):
        with pytest.raises(UnknownUnit):
            store.get_unit("u999999")

    def test_duplicate_reactivates_pending_unit(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the refund is late", 10))
        store.replace_unit(
            store.units[unit_id].transition(LifecycleState.PENDING_FORGET, pending_since=20)
        )

        store.upsert_unit(make_unit(store, "the refund is late", 30, provenance=("src:again",)))

        assert store.units[unit_id].state is LifecycleState.ACTIVE
        assert store.units[unit_id].pending_since is None


class TestAliases:
    def test_absorbed_unit_resolves_to_target(self, store, make_unit):
        kept = store.upsert_unit(make_unit(store, "warranty = 1-year free", 10))
        absorbed = store.upsert_unit(make_unit(store, "warranty = one year free", 20))

        store.absorb_unit(absorbed, kept)

        assert store.get_unit(absorbed).id == kept
        assert absorbed not in store.units
        assert store.find_by_content("Fact", "warranty = one year free").id == kept

    def test_remove_unit_drops_orphaned_edges(self, store, remember):
        receipt = remember(store, "I own a red bicycle.", 10)

        store.remove_unit(receipt.fact_unit_ids[0])

        assert edges_labeled(store, "owns") == []
        assert store.node_for_label("red bicycle") is None
        assert store.utterances[receipt.utterance_id].unit_ids == ()


class TestNodeMerge:
    """Scenario-based merging of near-identical nodes."""

    def test_duplicate_labels_merge(self, store):
        first = store.add_node("NYC", "Entity", None, 10)
        second = store.add_node("NYC", "Entity", None, 20)

        actions = store.merge_similar_nodes(0.9)

        assert [(a.kept, a.absorbed) for a in actions] == [(first, second)]
        assert actions[0].similarity == pytest.approx(1.0)
        assert store.resolve_node_id(second) == first
        assert store.merge_similar_nodes(0.9) == []

    def test_dissimilar_labels_stay(self, store):
        store.add_node("warranty", "Entity", None, 10)
        store.add_node("orbital mechanics", "Entity", None, 10)

        assert store.merge_similar_nodes(0.9) == []
        assert len(store.nodes) == 2

    def test_merge_rewires_edges(self, store, make_unit):
        unit = make_unit(store, "user owns bike", relation=Relation(head="user", label="owns", tail="bike"))
        unit_id = store.upsert_unit(unit)
        duplicate = store.add_node("bike", "Entity", None, 20)

        store.merge_similar_nodes(0.9)

        (edge,) = edges_labeled(store, "owns")
        assert store.resolve_node_id(duplicate) == edge.tail
        assert store.nodes_of_unit(unit_id) == {edge.head, edge.tail}

    def test_threshold_must_be_positive(self, store):
        with pytest.raises(ValueError):
            store.merge_similar_nodes(0.0)

    def test_require_node(self, store):
        node_id = store.add_node("paris", "Entity", None, 10)

        assert store.require_node("Paris").id == node_id
        assert store.require_node(node_id).label == "paris"
        with pytest.raises(UnknownNode):
            store.require_node("berlin")


class TestEdgeFailure:
    """Latest-wins over functional relations and soft-deleted sources."""

    def test_newer_functional_value_fails_older_edge(self, store, remember):
        remember(store, "I live in Paris.", 100)
        remember(store, "I live in Berlin.", 200)

        failed = store.detect_failed_edges(300)

        paris, berlin = edges_labeled(store, "lives_in")
        assert failed == [paris.id]
        assert store.edges[paris.id].validity is EdgeValidity.FAILED
        assert store.edges[paris.id].strength == 0.0
        assert store.edges[berlin.id].validity is EdgeValidity.VALID

    def test_non_functional_relations_coexist(self, store, remember):
        remember(store, "I visited Rome.", 100)
        remember(store, "I visited Oslo.", 200)

        assert store.detect_failed_edges(300) == []
        assert all(e.validity is EdgeValidity.VALID for e in edges_labeled(store, "visited"))

    def test_soft_deleted_source_fails_edge(self, store, remember):
        receipt = remember(store, "I own a red bicycle.", 10)
        unit = store.get_unit(receipt.fact_unit_ids[0])
        store.replace_unit(unit.retire(LifecycleState.SOFT_DELETED, 20))

        (edge,) = edges_labeled(store, "owns")
        assert store.detect_failed_edges(30) == [edge.id]

    def test_failed_edges_leave_the_valid_view(self, store, remember):
        remember(store, "I live in Paris.", 100)
        remember(store, "I live in Berlin.", 200)
        store.detect_failed_edges(300)

        paris, berlin = edges_labeled(store, "lives_in")
        keys = {key for _, _, key in store.valid_graph().edges(keys=True)}
        assert berlin.id in keys
        assert paris.id not in keys


class TestRecords:
    """Change draining and rebuilding from records."""

    def test_drain_changes_once(self, store, remember):
        remember(store, "I own a red bicycle.", 10)

        records = store.drain_changes()

        kinds = {r.kind for r in records}
        assert {"meta", "utterance", "unit", "node", "edge"} <= kinds
        assert records[0].kind == "meta"
        assert store.drain_changes() == []

    def test_round_trip(self, store, remember):
        remember(store, "I live in Paris.", 100)
        remember(store, "I live in Berlin.", 200)
        remember(store, "Okay, I understand.", 210, speaker="assistant")
        store.detect_failed_edges(300)
        store.generation = 3

        rebuilt = MemoryStore.from_records(store.to_records())

        assert rebuilt.space_id == store.space_id
        assert rebuilt.generation == 3
        assert rebuilt.units.keys() == store.units.keys()
        assert rebuilt.edges == store.edges
        assert rebuilt.nodes == store.nodes
        assert rebuilt.to_records() == store.to_records()

    def test_rebuilt_store_keeps_counters(self, store, remember):
        remember(store, "I live in Paris.", 100)
        rebuilt = MemoryStore.from_records(store.to_records())

        receipt = remember(rebuilt, "I visited Rome.", 200)

        assert receipt.fact_unit_ids[0] not in store.units

    def test_empty_store_round_trip(self):
        empty = MemoryStore("empty")
        rebuilt = MemoryStore.from_records(empty.to_records())

        assert len(rebuilt) == 0
        assert rebuilt.space_id == "empty"

    def test_records_without_space(self):
        with pytest.raises(SpaceUnknown):
            MemoryStore.from_records([])

    def test_clone_is_independent(self, store, remember):
        remember(store, "I own a red bicycle.", 10)
        twin = store.clone()

        remember(twin, "I visited Rome.", 20)

        assert len(twin) == 2
        assert len(store) == 1
        assert len(edges_labeled(store, "visited")) == 0
