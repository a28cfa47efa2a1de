"""Knowledge-graph elements."""

from __future__ import annotations

from enum import StrEnum
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.memory import TagSet


class NodeKind(StrEnum):
    ENTITY = "Entity"
    EVENT = "Event"


class EdgeValidity(StrEnum):
    VALID = "Valid"
    WEAKENED = "Weakened"
    FAILED = "Failed"


class GraphNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    label: Annotated[str, Field(min_length=1)]
    kind: NodeKind = NodeKind.ENTITY
    unit_refs: TagSet = ()
    aliases: TagSet = ()
    created_at: int = 0


class GraphEdge(BaseModel):
    """Directed, attributed relation between two nodes."""

    model_config = ConfigDict(frozen=True)

    id: str
    head: str
    tail: str
    relation_label: Annotated[str, Field(min_length=1)]
    source: str
    source_units: TagSet = ()
    timestamp: Annotated[int, Field(ge=0)]
    emotion_weight: Annotated[float, Field(ge=0.0, le=1.0)] = 0.0
    strength: Annotated[float, Field(ge=0.0)] = 1.0
    validity: EdgeValidity = EdgeValidity.VALID
    weakened_at: int | None = None

    @model_validator(mode="after")
    def strength_matches_validity(self) -> "GraphEdge":
        if (self.strength == 0.0) != (self.validity is EdgeValidity.FAILED):
            raise ValueError("strength must be 0 exactly when the edge is Failed")
        return self

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation_label, self.tail)


class NodeMergeAction(BaseModel):
    model_config = ConfigDict(frozen=True)

    kept: str
    absorbed: str
    similarity: float
    kept_label: str
    absorbed_label: str


class Utterance(BaseModel):
    """One ingested turn; units list the memory units it produced."""

    model_config = ConfigDict(frozen=True)

    id: str
    seq: int
    dialogue: str = "default"
    speaker: str = "user"
    text: str
    ts: int
    act: str = "statement"
    unit_ids: tuple[str, ...] = ()
