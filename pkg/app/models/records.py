"""Log records shared by the append-only log and snapshot files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

# Replay order: meta first, then nodes before the edges that reference them.
RECORD_KINDS = ("meta", "utterance", "unit", "unit_alias", "node", "node_alias", "edge")
KIND_ORDER = {kind: index for index, kind in enumerate(RECORD_KINDS)}


@dataclass(frozen=True)
class LogRecord:
    """State of one store element; ``payload`` is None for a tombstone."""

    kind: str
    record_id: str
    payload: dict[str, Any] | None

    def sort_key(self) -> tuple[int, str]:
        return (KIND_ORDER[self.kind], self.record_id)

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "id": self.record_id, "data": self.payload},
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "LogRecord":
        raw = json.loads(line)
        if raw.get("kind") not in KIND_ORDER or not isinstance(raw.get("id"), str):
            raise ValueError(f"malformed record: {line[:80]!r}")
        return cls(kind=raw["kind"], record_id=raw["id"], payload=raw.get("data"))
