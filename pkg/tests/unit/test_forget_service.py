"""Unit tests for retention sweeps, restoration and edge weakening."""

import math

import pytest

from app.errors import NotSoftDeleted, UnknownUnit
from app.models.activation import ActivationParams
from app.models.graph import EdgeValidity
from app.models.memory import LifecycleState
from app.services.activation_service import retention, touch_unit
from app.services.forget_service import restore, sweep

DAY = 86400
T0 = 1_700_000_000
HOUR = 3600
GRACE = 7 * DAY


def daily_sweeps(store, days, start=1):
    """Sweep once per day; returns the first day each unit went pending."""
    pending = {}
    for day in range(start, days + 1):
        for unit_id in sweep(store, T0 + day * DAY, grace=GRACE).to_pending:
            pending.setdefault(unit_id, day)
    return pending


def closed_form_crossing(params: ActivationParams) -> float:
    """Age where offset + (1 - offset) * exp(-lam * t) meets the threshold."""
    return -math.log((params.forget_threshold - params.offset) / (1 - params.offset)) / params.lam


def first_pending_hour(store, params: ActivationParams, hours: int) -> int | None:
    for hour in range(1, hours + 1):
        if sweep(store, T0 + hour * HOUR, params, grace=GRACE).to_pending:
            return hour
    return None


class TestThresholdCrossing:
    """Hourly sweeps over a created, never accessed unit."""

    @pytest.mark.parametrize(
        ("lam", "offset", "threshold"),
        [(2.0, 0.1, 0.35), (5.0, 0.0, 0.5), (1.5, 0.3, 0.6), (10.0, 0.5, 0.9)],
    )
    def test_within_first_day_matches_closed_form(self, store, make_unit, lam, offset, threshold):
        params = ActivationParams(lam=lam, offset=offset, forget_threshold=threshold)
        crossing = closed_form_crossing(params)
        assert crossing < 1.0
        assert retention([1.0], crossing, params) == pytest.approx(threshold, rel=1e-12)
        store.upsert_unit(make_unit(store, "the parcel is blue"))

        hour = first_pending_hour(store, params, 48)

        assert hour is not None
        assert crossing * 24 <= hour < crossing * 24 + 1

    @pytest.mark.parametrize(
        ("d", "lam", "offset", "threshold"),
        [(0.5, 1.0, 0.1, 0.35), (0.5, 0.5, 0.1, 0.35), (0.3, 0.2, 0.1, 0.35)],
    )
    def test_past_first_day_strength_decays_with_age(self, store, make_unit, d, lam, offset, threshold):
        params = ActivationParams(d=d, lam=lam, offset=offset, forget_threshold=threshold)
        closed_form = closed_form_crossing(params)
        assert closed_form > 1.0
        # strength is t**-d past one age unit, so exp(-lam * t**(1 + d)) meets the threshold here
        crossing = closed_form ** (1 / (1 + d))
        assert retention([crossing], crossing, params) == pytest.approx(threshold, rel=1e-9)
        store.upsert_unit(make_unit(store, "the parcel is blue"))

        hour = first_pending_hour(store, params, 7 * 24)

        assert hour is not None
        assert crossing * 24 <= hour < crossing * 24 + 1
        assert hour <= closed_form * 24 + 1


class TestSweep:
    """Active -> PendingForget -> SoftDeleted / Compressed."""

    def test_fresh_unit_goes_pending_on_second_day(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the parcel is blue"))

        assert sweep(store, T0 + DAY).to_pending == []
        report = sweep(store, T0 + 2 * DAY)

        assert report.to_pending == [unit_id]
        unit = store.units[unit_id]
        assert unit.state is LifecycleState.PENDING_FORGET
        assert unit.pending_since == T0 + 2 * DAY

    def test_daily_access_keeps_unit_active(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the locker code is 4411"))

        for day in range(1, 91):
            report = sweep(store, T0 + day * DAY)
            assert unit_id not in report.to_pending
            unit = store.units[unit_id]
            store.replace_unit(touch_unit(unit, T0 + day * DAY, store.params))

        assert store.units[unit_id].state is LifecycleState.ACTIVE

    def test_pinned_units_are_exempt(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "my blood type is 0 negative", tags=("pinned",)))

        assert daily_sweeps(store, 60) == {}
        assert store.units[unit_id].state is LifecycleState.ACTIVE

    def test_grace_period_then_soft_delete(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the parcel is blue"))
        sweep(store, T0 + 2 * DAY)

        assert sweep(store, T0 + 2 * DAY + GRACE).to_soft_deleted == []
        report = sweep(store, T0 + 3 * DAY + GRACE)

        assert report.to_soft_deleted == [unit_id]
        assert store.units[unit_id].state is LifecycleState.SOFT_DELETED

    def test_multi_source_unit_is_compressed(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the warranty covers screens"))
        store.upsert_unit(make_unit(store, "the warranty covers screens", provenance=("src:second",)))
        sweep(store, T0 + 2 * DAY)

        report = sweep(store, T0 + 3 * DAY + GRACE)

        unit = store.units[unit_id]
        assert report.to_compressed == [unit_id]
        assert unit.state is LifecycleState.COMPRESSED
        assert unit.content.startswith("[compressed")

    def test_salient_emotion_is_compressed(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the refund was refused", emotion=0.9))
        sweep(store, T0 + 2 * DAY)

        report = sweep(store, T0 + 3 * DAY + GRACE)

        assert report.to_compressed == [unit_id]

    def test_dry_run_leaves_store_untouched(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the parcel is blue"))
        version = store.version

        report = sweep(store, T0 + 2 * DAY, dry_run=True)

        assert report.dry_run is True
        assert report.to_pending == [unit_id]
        assert store.version == version
        assert store.units[unit_id].state is LifecycleState.ACTIVE

    def test_retrieval_reactivates_pending_unit(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the parcel is blue"))
        sweep(store, T0 + 2 * DAY)

        store.replace_unit(touch_unit(store.units[unit_id], T0 + 3 * DAY, store.params))

        unit = store.units[unit_id]
        assert unit.state is LifecycleState.ACTIVE
        assert unit.pending_since is None


class TestEdgeWeakening:
    def test_edge_without_active_source_halves(self, store, remember):
        remember(store, "I own a red bicycle.", T0)
        (edge_id,) = store.edges

        report = sweep(store, T0 + 2 * DAY)

        assert edge_id in report.edges_weakened
        edge = store.edges[edge_id]
        assert edge.strength == pytest.approx(0.5)
        assert edge.validity is EdgeValidity.WEAKENED

    def test_at_most_once_per_time_unit(self, store, remember):
        remember(store, "I own a red bicycle.", T0)
        (edge_id,) = store.edges
        sweep(store, T0 + 2 * DAY)

        report = sweep(store, T0 + 2 * DAY + 3600)

        assert report.edges_weakened == []
        assert store.edges[edge_id].strength == pytest.approx(0.5)

    def test_repeated_weakening_fails_the_edge(self, store, remember):
        remember(store, "I own a red bicycle.", T0)
        (edge_id,) = store.edges

        failed_on = None
        for day in range(2, 20):
            if edge_id in sweep(store, T0 + day * DAY).edges_failed:
                failed_on = day
                break

        assert failed_on is not None
        assert store.edges[edge_id].validity is EdgeValidity.FAILED
        assert store.edges[edge_id].strength == 0.0

    def test_active_source_keeps_edge(self, store, remember):
        remember(store, "I own a red bicycle.", T0)

        report = sweep(store, T0 + DAY)

        assert report.edges_weakened == []


class TestRestore:
    def test_restore_soft_deleted_unit(self, store, remember):
        receipt = remember(store, "I own a red bicycle.", T0)
        unit_id = receipt.fact_unit_ids[0]
        (edge_id,) = store.edges
        sweep(store, T0 + 2 * DAY)
        for day in range(3, 16):
            sweep(store, T0 + day * DAY)
        assert store.units[unit_id].state is LifecycleState.SOFT_DELETED

        restored = restore(store, unit_id, T0 + 20 * DAY)

        assert restored.state is LifecycleState.ACTIVE
        assert restored.trace.last_access == T0 + 20 * DAY
        assert store.edges[edge_id].validity is EdgeValidity.VALID
        assert store.edges[edge_id].strength == 1.0

    def test_restore_active_unit_fails(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the parcel is blue"))

        with pytest.raises(NotSoftDeleted):
            restore(store, unit_id, T0 + DAY)

    def test_restore_compressed_unit_fails(self, store, make_unit):
        unit_id = store.upsert_unit(make_unit(store, "the refund was refused", emotion=0.9))
        sweep(store, T0 + 2 * DAY)
        sweep(store, T0 + 3 * DAY + GRACE)

        with pytest.raises(NotSoftDeleted):
            restore(store, unit_id, T0 + 20 * DAY)

    def test_restore_unknown_unit(self, store):
        with pytest.raises(UnknownUnit):
            restore(store, "u404404", T0)

    def test_superseded_edge_stays_failed(self, store, remember):
        paris = remember(store, "I live in Paris.", T0)
        remember(store, "I live in Berlin.", T0 + 30 * DAY)
        store.detect_failed_edges(T0 + 30 * DAY)
        unit = store.get_unit(paris.fact_unit_ids[0])
        store.replace_unit(unit.retire(LifecycleState.SOFT_DELETED, T0 + 31 * DAY))

        restore(store, unit.id, T0 + 32 * DAY)

        paris_edge = next(
            e for e in store.edges.values() if store.nodes[e.tail].label == "paris"
        )
        assert paris_edge.validity is EdgeValidity.FAILED
