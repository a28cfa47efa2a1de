"""Activation parameters, retrieval traces and score weights."""

from __future__ import annotations

import logging
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

DEFAULT_HISTORY_CAP = 64
SECONDS_PER_DAY = 86400


class ActivationParams(BaseModel):
    """Parameters of the base-level activation and retention model.

    ``time_unit_seconds`` converts stored second timestamps into the age unit the
    equations consume; with the default of one day a unit accessed daily stays
    active indefinitely.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    d: float = 0.5
    lam: Annotated[float, Field(gt=0.0, alias="lambda")] = 1.0
    offset: Annotated[float, Field(ge=0.0, lt=1.0)] = 0.1
    forget_threshold: Annotated[float, Field(gt=0.0, lt=1.0)] = 0.35
    history_cap: Annotated[int, Field(ge=1)] = DEFAULT_HISTORY_CAP
    time_unit_seconds: Annotated[int, Field(ge=1)] = SECONDS_PER_DAY

    @field_validator("d")
    @classmethod
    def warn_on_unusual_decay(cls, v: float) -> float:
        """Decay outside the usual [0.3, 0.7] band is legal but suspicious."""
        if v <= 0:
            raise ValueError("decay exponent d must be positive")
        if not 0.3 <= v <= 0.7:
            logger.warning("Decay exponent d=%s is outside the usual [0.3, 0.7] range", v)
        return v

    @model_validator(mode="after")
    def check_threshold_order(self) -> "ActivationParams":
        if not self.offset < self.forget_threshold < 1.0:
            raise ValueError("require offset < forget_threshold < 1")
        return self


class ScoreWeights(BaseModel):
    """Convex weights of the hybrid retrieval score plus spreading parameters."""

    model_config = ConfigDict(frozen=True)

    w_sim: Annotated[float, Field(ge=0.0)] = 0.55
    w_act: Annotated[float, Field(ge=0.0)] = 0.25
    w_pref: Annotated[float, Field(ge=0.0)] = 0.10
    w_emo: Annotated[float, Field(ge=0.0)] = 0.10
    hop_decay: Annotated[float, Field(gt=0.0, lt=1.0)] = 0.5
    max_hops: Annotated[int, Field(ge=0, le=6)] = 2

    @model_validator(mode="after")
    def check_weights_sum(self) -> "ScoreWeights":
        total = self.w_sim + self.w_act + self.w_pref + self.w_emo
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"score weights must sum to 1, got {total!r}")
        return self


class ActivationTrace(BaseModel):
    """Retrieval history of one memory unit.

    Creation counts as the first retrieval. Only the most recent events are kept
    verbatim; older ones are folded into ``summarized_count`` events at
    ``summarized_mean`` (their mean timestamp).
    """

    model_config = ConfigDict(frozen=True)

    retrieval_times: tuple[int, ...]
    summarized_count: Annotated[int, Field(ge=0)] = 0
    summarized_mean: float = 0.0

    @field_validator("retrieval_times")
    @classmethod
    def check_sorted(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v:
            raise ValueError("retrieval_times must not be empty")
        if any(later < earlier for earlier, later in zip(v, v[1:])):
            raise ValueError("retrieval_times must be sorted ascending")
        if v[0] < 0:
            raise ValueError("timestamps must be non-negative")
        return v

    @classmethod
    def created(cls, ts: int) -> "ActivationTrace":
        return cls(retrieval_times=(ts,))

    @property
    def last_access(self) -> int:
        return self.retrieval_times[-1]

    @property
    def event_count(self) -> int:
        return len(self.retrieval_times) + self.summarized_count
