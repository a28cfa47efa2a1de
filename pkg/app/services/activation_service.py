"""Base-level activation, retention and access bookkeeping.

Base-level activation of a memory with retrieval ages ``t_k``::

    B = ln(sum_k t_k ** -d)

Retention after ``t`` age units since the latest retrieval::

    R = offset + (1 - offset) * exp(-lambda * t / sum_k t_k ** -d)

All functions here are pure. Ages are clamped below at 1 age unit.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

from app.errors import ClockSkew, EmptyHistory
from app.models.activation import ActivationParams, ActivationTrace
from app.models.memory import LifecycleState, MemoryUnit

AGE_EPSILON = 1.0


def _strength(ages: Sequence[float], d: float, weights: Sequence[float] | None = None) -> float:
    if not ages:
        raise EmptyHistory("activation needs at least one retrieval event")
    if weights is None:
        return math.fsum(max(age, AGE_EPSILON) ** -d for age in ages)
    return math.fsum(w * max(age, AGE_EPSILON) ** -d for age, w in zip(ages, weights))


def base_level_activation(ages: Sequence[float], d: float) -> float:
    """ln of the power-law-decayed sum of retrieval ages."""
    return math.log(_strength(ages, d))


def retention(ages: Sequence[float], t_since_last: float, params: ActivationParams) -> float:
    """Bounded retention in [offset, 1]; exactly 1 at ``t_since_last == 0``."""
    if t_since_last < 0:
        raise ValueError("t_since_last must be non-negative")
    strength = _strength(ages, params.d)
    decayed = math.exp(-params.lam * t_since_last / strength)
    return params.offset + (1.0 - params.offset) * decayed


def classify_state(r: float, params: ActivationParams) -> LifecycleState:
    """PendingForget strictly below the threshold; the boundary stays Active."""
    if r < params.forget_threshold:
        return LifecycleState.PENDING_FORGET
    return LifecycleState.ACTIVE


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def trace_ages(
    trace: ActivationTrace, now: int, params: ActivationParams
) -> tuple[list[float], list[float]]:
    """Ages of the trace events at ``now`` in age units, with multiplicities."""
    unit = float(params.time_unit_seconds)
    ages = [(now - t) / unit for t in trace.retrieval_times]
    weights = [1.0] * len(ages)
    if trace.summarized_count:
        ages.append((now - trace.summarized_mean) / unit)
        weights.append(float(trace.summarized_count))
    return ages, weights


def trace_strength(trace: ActivationTrace, now: int, params: ActivationParams) -> float:
    ages, weights = trace_ages(trace, now, params)
    return _strength(ages, params.d, weights)


def trace_activation(trace: ActivationTrace, now: int, params: ActivationParams) -> float:
    """B(i) of a trace at ``now``."""
    return math.log(trace_strength(trace, now, params))


def squashed_activation(trace: ActivationTrace, now: int, params: ActivationParams) -> float:
    """Logistic of B(i), which simplifies to S / (1 + S)."""
    strength = trace_strength(trace, now, params)
    return strength / (1.0 + strength)


def trace_retention(trace: ActivationTrace, now: int, params: ActivationParams) -> float:
    strength = trace_strength(trace, now, params)
    elapsed = max(0.0, (now - trace.last_access) / float(params.time_unit_seconds))
    decayed = math.exp(-params.lam * elapsed / strength)
    return params.offset + (1.0 - params.offset) * decayed


def unit_retention(unit: MemoryUnit, now: int, params: ActivationParams) -> float:
    return trace_retention(unit.trace, now, params)


def _fold(trace: ActivationTrace, times: list[int], cap: int) -> ActivationTrace:
    count = trace.summarized_count
    mean = trace.summarized_mean
    while len(times) > cap:
        oldest = times.pop(0)
        mean = (mean * count + oldest) / (count + 1)
        count += 1
    return ActivationTrace(retrieval_times=tuple(times), summarized_count=count, summarized_mean=mean)


def record_access(
    trace: ActivationTrace, now: int, cap: int | None = None
) -> ActivationTrace:
    """Append a retrieval event at ``now``, folding events beyond ``cap`` into the summary."""
    if now < trace.last_access:
        raise ClockSkew(f"access at {now} precedes last access {trace.last_access}")
    limit = cap if cap is not None else ActivationParams().history_cap
    return _fold(trace, [*trace.retrieval_times, now], limit)


def merge_traces(
    first: ActivationTrace, second: ActivationTrace, cap: int | None = None
) -> ActivationTrace:
    """Union of two traces' events, used when units are fused."""
    limit = cap if cap is not None else ActivationParams().history_cap
    times = sorted([*first.retrieval_times, *second.retrieval_times])
    count = first.summarized_count + second.summarized_count
    mean = 0.0
    if count:
        mean = (
            first.summarized_mean * first.summarized_count
            + second.summarized_mean * second.summarized_count
        ) / count
    base = ActivationTrace(retrieval_times=(times[0],), summarized_count=count, summarized_mean=mean)
    return _fold(base, times, limit)


def touch_unit(unit: MemoryUnit, now: int, params: ActivationParams) -> MemoryUnit:
    """Record an access; PendingForget units re-activate."""
    trace = record_access(unit.trace, now, params.history_cap)
    if unit.state is LifecycleState.PENDING_FORGET:
        return unit.transition(LifecycleState.ACTIVE, trace=trace)
    return unit.model_copy(update={"trace": trace})
