"""Reports emitted by pruning, forgetting and reflection passes."""

from __future__ import annotations

from enum import StrEnum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RedundancyClass(StrEnum):
    DUPLICATE = "Duplicate"
    IRRELEVANT = "Irrelevant"
    OUTDATED = "Outdated"
    KEEP = "Keep"


class RedundancyVerdict(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    unit_id: str
    redundancy: RedundancyClass = Field(alias="class")
    merge_target: str | None = None
    superseded_by: str | None = None
    evidence: dict[str, Any] = Field(default_factory=dict)
    store_version: int = 0

    @model_validator(mode="after")
    def target_matches_class(self) -> "RedundancyVerdict":
        if self.redundancy is RedundancyClass.DUPLICATE and not self.merge_target:
            raise ValueError("Duplicate verdicts need a merge target")
        if self.redundancy is RedundancyClass.KEEP and self.merge_target:
            raise ValueError("Keep verdicts cannot carry a merge target")
        return self


class PruneReport(BaseModel):
    units_removed: int = 0
    units_merged: int = 0
    units_compressed: int = 0
    tokens_before: int = 0
    tokens_after: int = 0
    merges: list[dict[str, Any]] = Field(default_factory=list)

    @property
    def mutation_count(self) -> int:
        return self.units_removed + self.units_merged + self.units_compressed


class ForgetReport(BaseModel):
    to_pending: list[str] = Field(default_factory=list)
    to_soft_deleted: list[str] = Field(default_factory=list)
    to_compressed: list[str] = Field(default_factory=list)
    edges_weakened: list[str] = Field(default_factory=list)
    edges_failed: list[str] = Field(default_factory=list)
    dry_run: bool = False

    @property
    def mutation_count(self) -> int:
        return (
            len(self.to_pending)
            + len(self.to_soft_deleted)
            + len(self.to_compressed)
            + len(self.edges_weakened)
            + len(self.edges_failed)
        )


class Finding(BaseModel):
    """Advisory record produced by a reflection pass."""

    model_config = ConfigDict(frozen=True)

    kind: str
    subjects: tuple[str, ...]
    detail: str = ""


class Resolution(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    fact_key: str
    kept: str
    affected: tuple[str, ...]


class LogicalReport(BaseModel):
    findings: list[Finding] = Field(default_factory=list)
    reinforced: dict[str, float] = Field(default_factory=dict)


class FeedbackEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    unit_id: str
    delta: float


class ReflectionReport(BaseModel):
    space_id: str
    generation: int
    now: int
    feedback_applied: int = 0
    temporal: list[Finding] = Field(default_factory=list)
    factual: list[Resolution] = Field(default_factory=list)
    logical: LogicalReport = Field(default_factory=LogicalReport)
    failed_edges: list[str] = Field(default_factory=list)
    prune: PruneReport = Field(default_factory=PruneReport)
    forget: ForgetReport = Field(default_factory=ForgetReport)

    @property
    def mutation_count(self) -> int:
        return (
            self.feedback_applied
            + len(self.factual)
            + len(self.logical.reinforced)
            + len(self.failed_edges)
            + self.prune.mutation_count
            + self.forget.mutation_count
        )
