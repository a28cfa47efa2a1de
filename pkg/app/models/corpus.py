"""Synthetic dialogue corpus: generator parameters, probe questions and bench results."""

from __future__ import annotations

from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.api import IngestRequest


class CorpusConfig(BaseModel):
    """Shape of a generated corpus."""

    model_config = ConfigDict(frozen=True)

    facts: Annotated[int, Field(ge=1, le=100_000)] = 100
    dup: Annotated[int, Field(ge=1, le=100)] = 1
    ack_rate: Annotated[float, Field(ge=0.0, le=1.0)] = 0.0
    contradictions: Annotated[int, Field(ge=0)] = 0
    seed: int = 0
    start_ts: Annotated[int, Field(ge=0)] = 1_700_000_000
    step_seconds: Annotated[int, Field(ge=1)] = 60
    contradiction_gap_seconds: Annotated[int, Field(ge=1)] = 2 * 86400
    dialogue: str = "corpus"

    @model_validator(mode="after")
    def contradictions_fit(self) -> "CorpusConfig":
        if self.contradictions > self.facts:
            raise ValueError("contradictions cannot exceed facts")
        return self


class Probe(BaseModel):
    """A question whose answer is the unit carrying ``fact_key``."""

    question: str
    fact_key: str
    answer: str


class Corpus(BaseModel):
    config: CorpusConfig
    turns: list[IngestRequest]
    probes: list[Probe]
    redundant_tokens: int = 0

    @property
    def fact_keys(self) -> set[str]:
        return {probe.fact_key for probe in self.probes}


class BenchReport(BaseModel):
    """Latency and token-efficiency figures of one bench run."""

    units: int
    queries: int
    k: int
    p50_ms: float
    p95_ms: float
    target_ms: float
    within_target: bool
    tokens_retrieved: float
    tokens_full_history: int
    ratio: float
    probes_answered: int = 0
    probes_total: int = 0
    tokens_live_before_prune: int | None = None
    tokens_live_after_prune: int | None = None
    redundant_tokens: int | None = None
