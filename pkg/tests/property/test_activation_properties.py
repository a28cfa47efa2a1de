"""Property-based tests for the activation and retention model.

The float implementation is checked against a 50-digit Decimal evaluation of
the same formulas.
"""

import math
from decimal import Decimal, localcontext

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from app.models.activation import ActivationParams, ActivationTrace
from app.services.activation_service import (
    base_level_activation,
    record_access,
    retention,
    trace_retention,
)

DAY = 86400

decay = st.floats(min_value=0.3, max_value=0.7, allow_nan=False)
rate = st.floats(min_value=0.1, max_value=10.0, allow_nan=False)
offsets = st.floats(min_value=0.0, max_value=0.5, exclude_max=True, allow_nan=False)
ages = st.lists(st.floats(min_value=1.0, max_value=1e8, allow_nan=False), min_size=1, max_size=20)
elapsed = st.floats(min_value=0.0, max_value=1e3, allow_nan=False)
long_ages = st.lists(st.floats(min_value=1.0, max_value=1e8, allow_nan=False), min_size=1, max_size=64)


def _params(d: float, lam: float, offset: float) -> ActivationParams:
    return ActivationParams(d=d, lam=lam, offset=offset, forget_threshold=offset + (1 - offset) / 2)


def _decimal_strength(values: list[float], d: float) -> Decimal:
    return sum((Decimal(a) ** Decimal(-d) for a in values), Decimal(0))


def oracle_activation(values: list[float], d: float) -> float:
    with localcontext() as ctx:
        ctx.prec = 50
        return float(_decimal_strength(values, d).ln())


def oracle_retention(values: list[float], t: float, d: float, lam: float, offset: float) -> float:
    with localcontext() as ctx:
        ctx.prec = 50
        strength = _decimal_strength(values, d)
        decayed = (-Decimal(lam) * Decimal(t) / strength).exp()
        return float(Decimal(offset) + (1 - Decimal(offset)) * decayed)


@given(values=ages, d=decay)
@settings(max_examples=200)
def test_activation_matches_high_precision_oracle(values, d):
    assert math.isclose(
        base_level_activation(values, d), oracle_activation(values, d), rel_tol=1e-9, abs_tol=1e-12
    )


@given(values=ages, t=elapsed, d=decay, lam=rate, offset=offsets)
@settings(max_examples=200)
def test_retention_matches_high_precision_oracle(values, t, d, lam, offset):
    params = _params(d, lam, offset)
    assert math.isclose(
        retention(values, t, params),
        oracle_retention(values, t, d, lam, offset),
        rel_tol=1e-9,
        abs_tol=1e-12,
    )


@given(values=ages, t=elapsed, d=decay, lam=rate, offset=offsets)
def test_retention_is_bounded(values, t, d, lam, offset):
    params = _params(d, lam, offset)
    r = retention(values, t, params)
    assert offset - 1e-12 <= r <= 1.0


@given(values=ages, t1=elapsed, t2=elapsed, d=decay, lam=rate, offset=offsets)
def test_retention_never_increases_with_elapsed_time(values, t1, t2, d, lam, offset):
    params = _params(d, lam, offset)
    early, late = sorted((t1, t2))
    assert retention(values, early, params) >= retention(values, late, params)


@given(values=ages, extra=st.floats(min_value=1.0, max_value=1e8), t=elapsed, d=decay)
def test_extra_rehearsal_never_lowers_retention(values, extra, t, d):
    params = _params(d, 1.0, 0.1)
    assert retention([*values, extra], t, params) >= retention(values, t, params)


@given(
    access_day=st.integers(min_value=1, max_value=5),
    wait_days=st.integers(min_value=0, max_value=5),
)
def test_recorded_access_raises_later_retention(access_day, wait_days):
    params = ActivationParams()
    created = ActivationTrace.created(0)
    accessed = record_access(created, access_day * DAY)
    later = (access_day + wait_days) * DAY
    assert trace_retention(accessed, later, params) > trace_retention(created, later, params)


@pytest.mark.slow
@given(values=long_ages, t=elapsed, d=decay, lam=rate, offset=offsets)
@settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_full_grid_matches_high_precision_oracle(values, t, d, lam, offset):
    params = _params(d, lam, offset)
    assert math.isclose(
        base_level_activation(values, d), oracle_activation(values, d), rel_tol=1e-9, abs_tol=1e-12
    )
    assert math.isclose(
        retention(values, t, params),
        oracle_retention(values, t, d, lam, offset),
        rel_tol=1e-9,
        abs_tol=1e-12,
    )


@pytest.mark.slow
@given(
    values=long_ages,
    extra=st.floats(min_value=1.0, max_value=1e8),
    t1=elapsed,
    t2=elapsed,
    d=decay,
    lam=rate,
    offset=offsets,
)
@settings(max_examples=1_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_trace_pairs_are_monotone_and_bounded(values, extra, t1, t2, d, lam, offset):
    params = _params(d, lam, offset)
    early, late = sorted((t1, t2))
    for trace in (values, [*values, extra]):
        assert offset - 1e-12 <= retention(trace, late, params) <= 1.0
        assert retention(trace, early, params) >= retention(trace, late, params)
    assert retention([*values, extra], late, params) >= retention(values, late, params)
