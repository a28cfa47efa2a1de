"""Engine error hierarchy.

Every failure the engine reports on purpose is a ``MemoryEngineError`` carrying a
stable machine-readable ``code`` and an HTTP status hint used by the API layer.
"""

from __future__ import annotations


class MemoryEngineError(Exception):
    """Base class for all engine errors."""

    code = "memory_engine_error"
    status_code = 400

    def __init__(self, message: str | None = None):
        super().__init__(message or self.__class__.__doc__ or self.code)
        self.message = message or (self.__class__.__doc__ or self.code).strip()

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code, "message": self.message}


class EmptyText(MemoryEngineError):
    """Text is empty after normalization."""

    code = "empty_text"
    status_code = 422


class DimensionMismatch(MemoryEngineError):
    """Vectors have different dimensions."""

    code = "dimension_mismatch"
    status_code = 422


class ZeroVector(MemoryEngineError):
    """Vector has zero norm."""

    code = "zero_vector"
    status_code = 422


class EmptyHistory(MemoryEngineError):
    """Activation history is empty."""

    code = "empty_history"
    status_code = 422


class ClockSkew(MemoryEngineError):
    """Access time precedes the last recorded access."""

    code = "clock_skew"
    status_code = 422


class EmptyUtterance(MemoryEngineError):
    """Utterance is empty."""

    code = "empty_utterance"
    status_code = 422


class InvalidTransition(MemoryEngineError):
    """Lifecycle transition is not allowed."""

    code = "invalid_transition"
    status_code = 409


class SpaceUnknown(MemoryEngineError):
    """Memory space does not exist."""

    code = "space_unknown"
    status_code = 404


class UnknownNode(MemoryEngineError):
    """Graph node does not exist."""

    code = "unknown_node"
    status_code = 404


class UnknownUnit(MemoryEngineError):
    """Memory unit does not exist."""

    code = "unknown_unit"
    status_code = 404


class CorruptSnapshot(MemoryEngineError):
    """Snapshot files are missing, truncated or fail the checksum."""

    code = "corrupt_snapshot"
    status_code = 422


class VersionUnsupported(MemoryEngineError):
    """Snapshot format version is not supported."""

    code = "version_unsupported"
    status_code = 422


class StaleVerdicts(MemoryEngineError):
    """Store changed after the verdicts were computed."""

    code = "stale_verdicts"
    status_code = 409


class NotSoftDeleted(MemoryEngineError):
    """Unit is not soft-deleted."""

    code = "not_soft_deleted"
    status_code = 409


class DuplicateAgent(MemoryEngineError):
    """Agent id is already registered."""

    code = "duplicate_agent"
    status_code = 409


class NoAgents(MemoryEngineError):
    """No agents are registered."""

    code = "no_agents"
    status_code = 409


class UnknownAgent(MemoryEngineError):
    """Agent is not registered."""

    code = "unknown_agent"
    status_code = 404


class EmptySelection(MemoryEngineError):
    """No shareable units match the requested topic."""

    code = "empty_selection"
    status_code = 404


class PermissionDenied(MemoryEngineError):
    """Envelope permissions do not admit this operation."""

    code = "permission_denied"
    status_code = 403


class Expired(MemoryEngineError):
    """Envelope is past its validity window."""

    code = "expired"
    status_code = 410


class ConfigInvalid(MemoryEngineError):
    """Configuration failed validation."""

    code = "config_invalid"
    status_code = 500


class BindFailure(MemoryEngineError):
    """Service could not bind its listening socket."""

    code = "bind_failure"
    status_code = 500


class PurgeRefused(MemoryEngineError):
    """Purge requires explicit confirmation."""

    code = "purge_refused"
    status_code = 409


class AnnotatorUnavailable(MemoryEngineError):
    """External annotator failed and fallback is disabled."""

    code = "annotator_unavailable"
    status_code = 502
