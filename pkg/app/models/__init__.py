"""Data models and schemas."""

from app.models.activation import ActivationParams, ActivationTrace, ScoreWeights
from app.models.graph import EdgeValidity, GraphEdge, GraphNode, NodeKind, Utterance
from app.models.hub import (
    AgentProfile,
    ApplyReport,
    PermissionKind,
    RouteRequest,
    SharePermission,
    ShareEnvelope,
    SummaryUnit,
)
from app.models.memory import (
    DialogueAct,
    EmotionTag,
    Entity,
    EntityKind,
    LifecycleState,
    MemoryUnit,
    Relation,
    SemanticAnchorSet,
    TemporalClass,
    Triple,
    UnitKind,
)

__all__ = [
    "ActivationParams",
    "ActivationTrace",
    "ScoreWeights",
    "EdgeValidity",
    "GraphEdge",
    "GraphNode",
    "NodeKind",
    "Utterance",
    "AgentProfile",
    "ApplyReport",
    "PermissionKind",
    "RouteRequest",
    "SharePermission",
    "ShareEnvelope",
    "SummaryUnit",
    "DialogueAct",
    "EmotionTag",
    "Entity",
    "EntityKind",
    "LifecycleState",
    "MemoryUnit",
    "Relation",
    "SemanticAnchorSet",
    "TemporalClass",
    "Triple",
    "UnitKind",
]
