"""Hub routes: agent registry, routing and summary sharing between agents."""

from typing import Annotated

from fastapi import APIRouter, Depends, status

from app.models.api import (
    AgentList,
    ApplyRequest,
    ExchangeRequest,
    ExchangeResponse,
    RouteResponse,
    ShareRequest,
)
from app.models.hub import AgentProfile, ApplyReport, RouteRequest, ShareEnvelope
from app.services.memory_service import MemoryService, get_memory_service

router = APIRouter(prefix="/hub", tags=["hub"])

Service = Annotated[MemoryService, Depends(get_memory_service)]


@router.post("/agents", response_model=AgentProfile, status_code=status.HTTP_201_CREATED)
async def register_agent(body: AgentProfile, service: Service):
    """Register an agent with its responsibility domain and memory space."""
    return await service.register_agent(body)


@router.get("/agents", response_model=AgentList)
async def list_agents(service: Service):
    return AgentList(agents=service.hub.agents())


@router.post("/route", response_model=RouteResponse)
async def route(body: RouteRequest, service: Service):
    """The agent whose domain best overlaps the request tags."""
    agent = service.route(body)
    return RouteResponse(agent_id=agent.agent_id, space_id=agent.space_id)


@router.post("/share", response_model=ShareEnvelope)
async def share(body: ShareRequest, service: Service):
    """Summarize an agent's memory on a topic into a share envelope."""
    return await service.share(body.agent_id, body.topic_tags, body.permissions, body.now)


@router.post("/apply", response_model=ApplyReport)
async def apply(body: ApplyRequest, service: Service):
    """Apply an envelope to the target agent's space; newer local facts win."""
    return await service.apply(body.envelope, body.target_agent_id, body.now)


@router.post("/exchange", response_model=ExchangeResponse)
async def exchange(body: ExchangeRequest, service: Service):
    """Share from one agent and apply to another in one call."""
    envelope, report = await service.exchange(
        body.agent_id, body.target_agent_id, body.topic_tags, body.permissions, body.now
    )
    return ExchangeResponse(envelope=envelope, report=report)
