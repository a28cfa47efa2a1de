"""Request and response schemas of the HTTP API and the service layer."""

from __future__ import annotations

from enum import StrEnum
from typing import Annotated, Any

from pydantic import BaseModel, ConfigDict, Field

from app.models.hub import AgentProfile, ApplyReport, SharePermission, ShareEnvelope
from app.models.maintenance import ForgetReport, PruneReport, ReflectionReport
from app.models.memory import MemoryUnit, SemanticAnchorSet, TagSet

SpaceId = Annotated[str, Field(min_length=1, max_length=100, pattern=r"^[A-Za-z0-9_.:-]+$")]


class IngestRequest(BaseModel):
    """One utterance to remember."""

    utterance: Annotated[str, Field(min_length=1, max_length=10_000)]
    speaker: Annotated[str, Field(min_length=1, max_length=100)] = "user"
    ts: Annotated[int, Field(ge=0)]
    dialogue: Annotated[str, Field(min_length=1, max_length=100)] = "default"
    tags: TagSet = ()


class IngestReceipt(BaseModel):
    space_id: str
    utterance_id: str
    unit_ids: list[str]
    fact_unit_ids: list[str]
    anchors: SemanticAnchorSet


class QueryRequest(BaseModel):
    text: Annotated[str, Field(min_length=1, max_length=10_000)]
    k: Annotated[int, Field(ge=1, le=1000)] = 5
    tags: TagSet = ()
    now: Annotated[int | None, Field(ge=0)] = None


class UnitView(BaseModel):
    """Public projection of a memory unit (no embedding)."""

    id: str
    kind: str
    content: str
    fact_key: str | None
    state: str
    created_at: int
    last_access: int
    access_count: int
    emotion_weight: float
    preference_tags: tuple[str, ...]
    provenance: tuple[str, ...]
    superseded_by: str | None = None
    flags: tuple[str, ...] = ()
    source: str | None = None

    @classmethod
    def of(cls, unit: MemoryUnit) -> "UnitView":
        return cls(
            id=unit.id,
            kind=str(unit.kind),
            content=unit.content,
            fact_key=unit.fact_key,
            state=str(unit.state),
            created_at=unit.created_at,
            last_access=unit.trace.last_access,
            access_count=unit.trace.event_count,
            emotion_weight=unit.emotion_weight,
            preference_tags=unit.preference_tags,
            provenance=unit.provenance,
            superseded_by=unit.superseded_by,
            flags=unit.flags,
            source=unit.source,
        )


class QueryHit(BaseModel):
    unit: UnitView
    score: float
    boost: float = 0.0
    path: list[str] = Field(default_factory=list)


class QueryResponse(BaseModel):
    space_id: str
    hits: list[QueryHit]
    tokens_retrieved: int


class MaintenancePass(StrEnum):
    PRUNE = "prune"
    FORGET = "forget"
    REFLECT = "reflect"
    MERGE = "merge"


class MaintainRequest(BaseModel):
    passes: Annotated[list[MaintenancePass], Field(min_length=1)]
    now: Annotated[int | None, Field(ge=0)] = None
    dry_run: bool = False


class MaintainResponse(BaseModel):
    space_id: str
    generation: int
    dry_run: bool = False
    prune: PruneReport | None = None
    forget: ForgetReport | None = None
    reflect: ReflectionReport | None = None
    merge: list[dict[str, Any]] | None = None


class RestoreRequest(BaseModel):
    now: Annotated[int | None, Field(ge=0)] = None


class SpaceStats(BaseModel):
    space_id: str
    generation: int
    store_version: int
    units_by_state: dict[str, int]
    units_by_kind: dict[str, int]
    nodes: int
    edges_by_validity: dict[str, int]
    utterances: int
    live_tokens: int


class SpaceProfile(BaseModel):
    """Preloaded view of a space: strongest facts, preferences and open conflicts."""

    space_id: str
    now: int
    top_facts: list[UnitView]
    preference_tags: list[str]
    unresolved_conflicts: list[UnitView]


class CompactResponse(BaseModel):
    space_id: str
    records_before: int
    records_after: int
    purged_units: int = 0


class ShareRequest(BaseModel):
    agent_id: Annotated[str, Field(min_length=1)]
    topic_tags: TagSet
    permissions: SharePermission = SharePermission()
    now: Annotated[int | None, Field(ge=0)] = None


class ApplyRequest(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    envelope: ShareEnvelope
    target_agent_id: Annotated[str, Field(min_length=1)]
    now: Annotated[int | None, Field(ge=0)] = None


class RouteResponse(BaseModel):
    agent_id: str
    space_id: str


class AgentList(BaseModel):
    agents: list[AgentProfile]


class ExchangeRequest(BaseModel):
    """Share a topic from one agent and apply it to another in one call."""

    agent_id: Annotated[str, Field(min_length=1)]
    target_agent_id: Annotated[str, Field(min_length=1)]
    topic_tags: TagSet
    permissions: SharePermission = SharePermission()
    now: Annotated[int | None, Field(ge=0)] = None


class ExchangeResponse(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    envelope: ShareEnvelope
    report: ApplyReport
