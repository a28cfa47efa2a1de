"""Multi-agent sharing: agent profiles and share envelopes."""

from __future__ import annotations

from enum import StrEnum
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.memory import Embedding, Relation, TagSet

ENVELOPE_SCHEMA_VERSION = 1


class AgentProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    agent_id: Annotated[str, Field(min_length=1, max_length=100)]
    responsibility_domain: TagSet
    behavior_interface: TagSet = ("query",)
    space_id: Annotated[str, Field(min_length=1)]

    @field_validator("responsibility_domain")
    @classmethod
    def domain_not_empty(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        if not v:
            raise ValueError("responsibility_domain must not be empty")
        return v


class PermissionKind(StrEnum):
    PUBLIC = "public"
    DOMAIN_RESTRICTED = "domain_restricted"
    PRIVATE = "private"


class SharePermission(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PermissionKind = PermissionKind.PUBLIC
    tags: TagSet = ()

    @model_validator(mode="after")
    def restricted_needs_tags(self) -> "SharePermission":
        if self.kind is PermissionKind.DOMAIN_RESTRICTED and not self.tags:
            raise ValueError("domain_restricted permissions need at least one tag")
        return self

    def admits(self, domain: tuple[str, ...] | frozenset[str]) -> bool:
        if self.kind is PermissionKind.PUBLIC:
            return True
        if self.kind is PermissionKind.PRIVATE:
            return False
        return bool(set(self.tags) & set(domain))


class SummaryUnit(BaseModel):
    """One fact key, summarized to its newest value."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    fact_key: str
    text: Annotated[str, Field(min_length=1)]
    embedding: Embedding
    origin_refs: Annotated[tuple[str, ...], Field(min_length=1)]
    observed_at: int
    tags: TagSet = ()
    relation: Relation | None = None
    emotion_weight: Annotated[float, Field(ge=0.0, le=1.0)] = 0.0


class ShareEnvelope(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: int = ENVELOPE_SCHEMA_VERSION
    envelope_id: str
    origin_agent: str
    topic_tags: TagSet
    summary_units: tuple[SummaryUnit, ...]
    origin_refs: tuple[str, ...]
    created_at: int
    valid_until: int
    permissions: SharePermission = SharePermission()

    @property
    def token_count(self) -> int:
        return sum(len(unit.text.split()) for unit in self.summary_units)


class ApplyReport(BaseModel):
    envelope_id: str
    accepted: int = 0
    rejected_expired: int = 0
    rejected_conflict: int = 0
    already_applied: bool = False
    unit_ids: list[str] = Field(default_factory=list)


class RouteRequest(BaseModel):
    tags: TagSet = ()
    query: str = ""
