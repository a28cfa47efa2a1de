"""Unit tests for base-level activation, retention and access bookkeeping."""

import math

import pytest

from app.errors import ClockSkew, EmptyHistory
from app.models.activation import ActivationParams, ActivationTrace
from app.models.memory import LifecycleState
from app.services.activation_service import (
    base_level_activation,
    classify_state,
    logistic,
    merge_traces,
    record_access,
    retention,
    squashed_activation,
    trace_activation,
    trace_ages,
    trace_retention,
    touch_unit,
)

DAY = 86400


class TestBaseLevelActivation:
    """ln of the power-law-decayed sum of ages."""

    def test_single_event_at_unit_age_is_zero(self):
        assert base_level_activation([1], 0.5) == 0.0

    def test_three_events(self):
        expected = math.log(1 + 2**-0.5 + 4**-0.5)
        assert base_level_activation([1, 2, 4], 0.5) == pytest.approx(0.791682509061385, abs=1e-12)
        assert base_level_activation([1, 2, 4], 0.5) == pytest.approx(expected, rel=1e-12)

    def test_empty_history_is_rejected(self):
        with pytest.raises(EmptyHistory):
            base_level_activation([], 0.5)

    def test_ages_below_one_are_clamped(self):
        """A fresh event does not blow up the power law."""
        assert base_level_activation([0], 0.5) == base_level_activation([1], 0.5)
        assert base_level_activation([0.25, 1], 0.5) == pytest.approx(math.log(2.0))


class TestRetention:
    """Bounded retention in [offset, 1]."""

    def test_equals_one_without_elapsed_time(self):
        assert retention([1, 5, 9], 0, ActivationParams()) == 1.0

    def test_one_age_unit_after_single_event(self):
        params = ActivationParams(offset=0.2)
        assert retention([1], 1, params) == pytest.approx(0.2 + 0.8 * math.exp(-1), abs=1e-9)
        assert retention([1], 1, params) == pytest.approx(0.494303, abs=1e-6)

    def test_approaches_offset(self):
        params = ActivationParams(offset=0.2)
        assert retention([1], 1e9, params) == pytest.approx(0.2, abs=1e-6)

    def test_negative_elapsed_time_is_rejected(self):
        with pytest.raises(ValueError):
            retention([1], -1, ActivationParams())

    def test_more_rehearsal_retains_longer(self):
        params = ActivationParams()
        assert retention([1, 2, 3], 2, params) > retention([1], 2, params)


class TestClassifyState:
    """Strictly below the threshold is PendingForget; the boundary stays Active."""

    def test_below_threshold(self):
        params = ActivationParams(forget_threshold=0.5)
        assert classify_state(0.49, params) is LifecycleState.PENDING_FORGET

    def test_boundary_is_active(self):
        params = ActivationParams(forget_threshold=0.5)
        assert classify_state(0.5, params) is LifecycleState.ACTIVE

    def test_full_retention_is_active(self):
        assert classify_state(1.0, ActivationParams()) is LifecycleState.ACTIVE


class TestTraces:
    """Traces in seconds, evaluated in age units."""

    def test_record_access_appends(self):
        trace = record_access(ActivationTrace.created(100), 200)
        assert trace.retrieval_times == (100, 200)
        assert trace.event_count == 2

    def test_record_access_rejects_clock_skew(self):
        with pytest.raises(ClockSkew):
            record_access(ActivationTrace.created(100), 50)

    def test_history_cap_folds_oldest_events(self):
        trace = ActivationTrace.created(1)
        for ts in (2, 3, 4, 5):
            trace = record_access(trace, ts, cap=3)
        assert trace.retrieval_times == (3, 4, 5)
        assert trace.summarized_count == 2
        assert trace.summarized_mean == pytest.approx(1.5)
        assert trace.event_count == 5

    def test_folding_keeps_activation_close(self):
        """Summarized events are evaluated at their mean age."""
        params = ActivationParams()
        full = ActivationTrace(retrieval_times=tuple(range(0, 10 * DAY, DAY)))
        folded = ActivationTrace.created(0)
        for ts in range(DAY, 10 * DAY, DAY):
            folded = record_access(folded, ts, cap=4)
        now = 30 * DAY
        assert trace_activation(folded, now, params) == pytest.approx(
            trace_activation(full, now, params), rel=0.02
        )

    def test_trace_ages_use_time_unit(self):
        trace = ActivationTrace(retrieval_times=(0, DAY))
        ages, weights = trace_ages(trace, 3 * DAY, ActivationParams())
        assert ages == [3.0, 2.0]
        assert weights == [1.0, 1.0]

    def test_squashed_activation_is_logistic_of_activation(self):
        params = ActivationParams()
        trace = ActivationTrace(retrieval_times=(0, 2 * DAY, 5 * DAY))
        now = 9 * DAY
        assert squashed_activation(trace, now, params) == pytest.approx(
            logistic(trace_activation(trace, now, params)), rel=1e-12
        )

    def test_merge_traces_unions_events(self):
        merged = merge_traces(
            ActivationTrace(retrieval_times=(10, 30)), ActivationTrace(retrieval_times=(20,))
        )
        assert merged.retrieval_times == (10, 20, 30)

    def test_fresh_trace_retention_decays_below_threshold_between_day_one_and_two(self):
        params = ActivationParams()
        trace = ActivationTrace.created(0)
        assert trace_retention(trace, DAY, params) >= params.forget_threshold
        assert trace_retention(trace, 2 * DAY, params) < params.forget_threshold


class TestTouchUnit:
    """Accesses re-activate pending units."""

    def test_pending_unit_reactivates(self, store, remember):
        receipt = remember(store, "My warranty period is 1 year.", 0)
        unit = store.get_unit(receipt.fact_unit_ids[0])
        pending = unit.transition(LifecycleState.PENDING_FORGET, pending_since=DAY)

        touched = touch_unit(pending, 2 * DAY, store.params)

        assert touched.state is LifecycleState.ACTIVE
        assert touched.pending_since is None
        assert touched.trace.retrieval_times == (0, 2 * DAY)

    def test_active_unit_gains_event(self, store, remember):
        receipt = remember(store, "My warranty period is 1 year.", 0)
        unit = store.get_unit(receipt.fact_unit_ids[0])

        touched = touch_unit(unit, DAY, store.params)

        assert touched.state is LifecycleState.ACTIVE
        assert touched.trace.event_count == 2
