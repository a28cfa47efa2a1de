"""Memory units and the semantic anchors extracted from utterances."""

from __future__ import annotations

import base64
from enum import StrEnum
from typing import Annotated, Any

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    WithJsonSchema,
    field_validator,
    model_validator,
)

from app.errors import InvalidTransition
from app.models.activation import ActivationTrace
from app.utils.text import count_tokens

UNIT_NORM_TOLERANCE = 1e-6


def _coerce_vector(value: Any) -> np.ndarray:
    if isinstance(value, np.ndarray):
        vector = np.array(value, dtype=np.float64)
    elif isinstance(value, (str, bytes)):
        raw = base64.b64decode(value, validate=True)
        if len(raw) % 8:
            raise ValueError("embedding payload is not a float64 array")
        vector = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    else:
        vector = np.asarray(list(value), dtype=np.float64)
    if vector.ndim != 1 or vector.size == 0:
        raise ValueError("embedding must be a non-empty 1-d vector")
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        raise ValueError(f"embedding must be unit-norm, got norm {norm}")
    vector.setflags(write=False)
    return vector


def _encode_vector(vector: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vector, dtype="<f8").tobytes()).decode("ascii")


Embedding = Annotated[
    np.ndarray,
    PlainValidator(_coerce_vector),
    PlainSerializer(_encode_vector, return_type=str),
    WithJsonSchema({"type": "string", "contentEncoding": "base64"}),
]


def _sorted_unique(values: Any) -> tuple[str, ...]:
    return tuple(sorted({str(v) for v in values}))


TagSet = Annotated[
    tuple[str, ...],
    PlainValidator(_sorted_unique),
    WithJsonSchema({"type": "array", "items": {"type": "string"}, "uniqueItems": True}),
]


class LifecycleState(StrEnum):
    ACTIVE = "Active"
    PENDING_FORGET = "PendingForget"
    SOFT_DELETED = "SoftDeleted"
    COMPRESSED = "Compressed"


# Restore is the only way back from SoftDeleted; Compressed is terminal.
ALLOWED_TRANSITIONS: dict[LifecycleState, frozenset[LifecycleState]] = {
    LifecycleState.ACTIVE: frozenset({LifecycleState.PENDING_FORGET}),
    LifecycleState.PENDING_FORGET: frozenset(
        {LifecycleState.ACTIVE, LifecycleState.SOFT_DELETED, LifecycleState.COMPRESSED}
    ),
    LifecycleState.SOFT_DELETED: frozenset({LifecycleState.ACTIVE}),
    LifecycleState.COMPRESSED: frozenset(),
}

LIVE_STATES = frozenset({LifecycleState.ACTIVE, LifecycleState.PENDING_FORGET})


class UnitKind(StrEnum):
    FACT = "Fact"
    TURN = "Turn"


class EntityKind(StrEnum):
    STRONG = "Strong"
    WEAK = "Weak"


class TemporalClass(StrEnum):
    PAST = "Past"
    PRESENT = "Present"
    FUTURE = "Future"
    RECURRING = "Recurring"
    ATEMPORAL = "Atemporal"


class DialogueAct(StrEnum):
    STATEMENT = "statement"
    QUESTION = "question"
    ACKNOWLEDGMENT = "acknowledgment"


class EmotionLabel(StrEnum):
    NEUTRAL = "neutral"
    POSITIVE = "positive"
    NEGATIVE = "negative"
    ANXIOUS = "anxious"
    FRUSTRATED = "frustrated"
    EXCITED = "excited"


class EmotionTag(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: EmotionLabel = EmotionLabel.NEUTRAL
    intensity: Annotated[float, Field(ge=0.0, le=1.0)] = 0.0

    @model_validator(mode="after")
    def neutral_has_no_intensity(self) -> "EmotionTag":
        if self.label is EmotionLabel.NEUTRAL and self.intensity != 0.0:
            raise ValueError("neutral emotion must have intensity 0")
        return self


class Entity(BaseModel):
    model_config = ConfigDict(frozen=True)

    surface: Annotated[str, Field(min_length=1)]
    kind: EntityKind
    category: str = "name"


class Triple(BaseModel):
    model_config = ConfigDict(frozen=True)

    subject: str
    predicate: str
    object: str


class Relation(BaseModel):
    model_config = ConfigDict(frozen=True)

    head: Annotated[str, Field(min_length=1)]
    label: Annotated[str, Field(min_length=1)]
    tail: Annotated[str, Field(min_length=1)]


class SemanticAnchorSet(BaseModel):
    """Everything the annotator extracted from one utterance."""

    model_config = ConfigDict(frozen=True)

    entities: tuple[Entity, ...] = ()
    triples: tuple[Triple, ...] = ()
    facts: tuple[str, ...] = ()
    relations: tuple[Relation, ...] = ()
    temporal_class: TemporalClass = TemporalClass.ATEMPORAL
    emotion: EmotionTag = EmotionTag()
    dialogue_act: DialogueAct = DialogueAct.STATEMENT
    preference_tags: tuple[str, ...] = ()

    @model_validator(mode="after")
    def check_entities(self) -> "SemanticAnchorSet":
        strong = {e.surface for e in self.entities if e.kind is EntityKind.STRONG}
        weak = {e.surface for e in self.entities if e.kind is EntityKind.WEAK}
        if strong & weak:
            raise ValueError(f"entities both strong and weak: {sorted(strong & weak)}")
        for triple in self.triples:
            for arg in (triple.subject, triple.object):
                if arg not in strong and arg not in weak:
                    raise ValueError(f"triple argument {arg!r} is not an entity")
        return self

    @property
    def strong_entities(self) -> list[Entity]:
        return [e for e in self.entities if e.kind is EntityKind.STRONG]


class MemoryUnit(BaseModel):
    """One structured memory fragment.

    ``id`` is empty until the store assigns one on insert.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: str = ""
    space_id: Annotated[str, Field(min_length=1)]
    kind: UnitKind = UnitKind.FACT
    content: Annotated[str, Field(min_length=1)]
    fact_key: str | None = None
    merged_keys: TagSet = ()
    relation: Relation | None = None
    anchors: SemanticAnchorSet = SemanticAnchorSet()
    embedding: Embedding
    created_at: Annotated[int, Field(ge=0)]
    trace: ActivationTrace
    emotion_weight: Annotated[float, Field(ge=0.0, le=1.0)] = 0.0
    preference_tags: TagSet = ()
    state: LifecycleState = LifecycleState.ACTIVE
    provenance: Annotated[tuple[str, ...], Field(min_length=1)]
    superseded_by: str | None = None
    pending_since: int | None = None
    flags: TagSet = ()
    source: str | None = None
    speaker: str | None = None

    @field_validator("provenance")
    @classmethod
    def dedupe_provenance(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        return tuple(dict.fromkeys(v))

    @property
    def keys(self) -> frozenset[str]:
        """Fact keys this unit answers for, including keys absorbed by fusion."""
        own = {self.fact_key} if self.fact_key else set()
        return frozenset(own | set(self.merged_keys))

    @property
    def is_live(self) -> bool:
        return self.state in LIVE_STATES

    @property
    def token_count(self) -> int:
        return count_tokens(self.content)

    def transition(self, target: LifecycleState, **updates: Any) -> "MemoryUnit":
        """Return a copy in ``target`` state, enforcing the lifecycle state machine."""
        if target is not self.state and target not in ALLOWED_TRANSITIONS[self.state]:
            raise InvalidTransition(f"{self.id}: {self.state} -> {target} is not allowed")
        if target is not LifecycleState.PENDING_FORGET:
            updates.setdefault("pending_since", None)
        return self.model_copy(update={"state": target, **updates})

    def retire(self, target: LifecycleState, now: int, **updates: Any) -> "MemoryUnit":
        """Move a live unit to SoftDeleted or Compressed, passing through PendingForget."""
        unit = self
        if unit.state is LifecycleState.ACTIVE:
            unit = unit.transition(LifecycleState.PENDING_FORGET, pending_since=now)
        return unit.transition(target, **updates)
