"""Memory space routes: ingest, query, maintenance and inspection."""

from typing import Annotated

from fastapi import APIRouter, Depends, Path, Query

from app.models.api import (
    CompactResponse,
    IngestReceipt,
    IngestRequest,
    MaintainRequest,
    MaintainResponse,
    QueryRequest,
    QueryResponse,
    RestoreRequest,
    SpaceProfile,
    SpaceStats,
    UnitView,
)
from app.services.memory_service import MemoryService, get_memory_service

router = APIRouter(prefix="/spaces", tags=["spaces"])

Service = Annotated[MemoryService, Depends(get_memory_service)]
SpacePath = Annotated[str, Path(min_length=1, max_length=100, pattern=r"^[A-Za-z0-9_.:-]+$")]


@router.get("")
async def list_spaces(service: Service) -> dict:
    """Every known space with its generation and store version."""
    return {"spaces": service.list_spaces()}


@router.post("/{space_id}/ingest", response_model=IngestReceipt)
async def ingest(space_id: SpacePath, body: IngestRequest, service: Service):
    """
    Remember one utterance; the space is created on first ingest.

    Returns:
        Ids of the units the utterance produced and its semantic anchors
    """
    return await service.ingest(space_id, body)


@router.post("/{space_id}/query", response_model=QueryResponse)
async def query(space_id: SpacePath, body: QueryRequest, service: Service):
    """Top-k memories for a query text; the returned units record an access."""
    return await service.query(space_id, body)


@router.post("/{space_id}/maintain", response_model=MaintainResponse, response_model_exclude_none=True)
async def maintain(space_id: SpacePath, body: MaintainRequest, service: Service):
    """
    Run prune, forget, reflect and merge passes in the given order.

    With ``dry_run`` the reports describe what would change and nothing is written.
    """
    return await service.maintain(space_id, body)


@router.post("/{space_id}/units/{unit_id}/restore", response_model=UnitView)
async def restore(space_id: SpacePath, unit_id: str, body: RestoreRequest, service: Service):
    """Bring a soft-deleted unit back to Active."""
    return await service.restore(space_id, unit_id, body.now)


@router.get("/{space_id}/stats", response_model=SpaceStats)
async def stats(space_id: SpacePath, service: Service):
    return await service.stats(space_id)


@router.get("/{space_id}/profile", response_model=SpaceProfile)
async def profile(
    space_id: SpacePath,
    service: Service,
    now: Annotated[int | None, Query(ge=0)] = None,
    limit: Annotated[int, Query(ge=1, le=100)] = 10,
):
    """Strongest facts, preference tags and open conflicts, for preloading an agent."""
    return await service.profile(space_id, now, limit)


@router.post("/{space_id}/compact", response_model=CompactResponse)
async def compact(
    space_id: SpacePath,
    service: Service,
    purge: bool = False,
    confirm: bool = False,
):
    """Rewrite the space log; ``purge=true&confirm=true`` also drops soft-deleted units."""
    return await service.compact(space_id, purge=purge, confirm=confirm)
