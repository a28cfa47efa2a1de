"""Snapshot files: a JSON-lines record log plus a checksummed manifest.

Layout of a snapshot directory::

    records.jsonl   one LogRecord per line, canonically sorted
    manifest.json   {"format_version", "space_id", "record_count", "sha256"}

Export is byte-stable: the same store always produces identical files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections.abc import Iterable
from pathlib import Path
from typing import TYPE_CHECKING

from app.errors import CorruptSnapshot, VersionUnsupported
from app.models.records import LogRecord

if TYPE_CHECKING:
    from app.services.graph_store import MemoryStore

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT_VERSION = 1
RECORDS_FILE = "records.jsonl"
MANIFEST_FILE = "manifest.json"


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_records(records: Iterable[LogRecord], path: str | Path, space_id: str) -> Path:
    """Write ``records`` as a snapshot directory at ``path``."""
    target = Path(path)
    target.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=LogRecord.sort_key)
    body = "".join(record.to_json() + "\n" for record in ordered).encode("utf-8")
    manifest = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "space_id": space_id,
        "record_count": len(ordered),
        "sha256": hashlib.sha256(body).hexdigest(),
    }
    _atomic_write(target / RECORDS_FILE, body)
    _atomic_write(
        target / MANIFEST_FILE,
        (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8"),
    )
    logger.info("Wrote snapshot of %s (%d records) to %s", space_id, len(ordered), target)
    return target


def write_snapshot(store: "MemoryStore", path: str | Path) -> Path:
    return write_records(store.to_records(), path, store.space_id)


def read_manifest(path: str | Path) -> dict:
    manifest_path = Path(path) / MANIFEST_FILE
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CorruptSnapshot(f"missing manifest in {path}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptSnapshot(f"unreadable manifest in {path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != SNAPSHOT_FORMAT_VERSION:
        raise VersionUnsupported(f"snapshot format {version!r} is not supported")
    return manifest


def read_snapshot(path: str | Path) -> list[LogRecord]:
    """
    Read and verify a snapshot directory.

    Raises:
        CorruptSnapshot: Missing files, checksum mismatch or malformed records
        VersionUnsupported: Unknown format version
    """
    manifest = read_manifest(path)
    try:
        body = (Path(path) / RECORDS_FILE).read_bytes()
    except FileNotFoundError as exc:
        raise CorruptSnapshot(f"missing {RECORDS_FILE} in {path}") from exc

    if hashlib.sha256(body).hexdigest() != manifest.get("sha256"):
        raise CorruptSnapshot(f"checksum mismatch in {path}")
    try:
        records = [LogRecord.from_json(line) for line in body.decode("utf-8").splitlines() if line]
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptSnapshot(f"malformed record in {path}: {exc}") from exc
    if len(records) != manifest.get("record_count"):
        raise CorruptSnapshot(
            f"record count {len(records)} does not match manifest {manifest.get('record_count')}"
        )
    return records
