"""Multi-agent coordination: agent registry, routing and summary-level sharing."""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Iterable

from app.errors import DuplicateAgent, EmptySelection, Expired, NoAgents, PermissionDenied, UnknownAgent
from app.models.activation import ActivationTrace
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
    Entity,
    EntityKind,
    LifecycleState,
    MemoryUnit,
    SemanticAnchorSet,
    Triple,
    UnitKind,
)
from app.services.graph_store import MemoryStore

logger = logging.getLogger(__name__)

PRIVATE_TAG = "private"
DEFAULT_TTL_SECONDS = 86400


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    left, right = set(a), set(b)
    union = left | right
    return len(left & right) / len(union) if union else 0.0


class HubService:
    """In-process registry and router of agents."""

    def __init__(self):
        self._agents: dict[str, AgentProfile] = {}

    def register_agent(self, profile: AgentProfile) -> AgentProfile:
        """
        Make an agent routable.

        Raises:
            DuplicateAgent: If the agent id is already registered
        """
        if profile.agent_id in self._agents:
            raise DuplicateAgent(f"agent {profile.agent_id!r} is already registered")
        self._agents[profile.agent_id] = profile
        logger.info(
            "Registered agent %s for %s (space %s)",
            profile.agent_id,
            ",".join(profile.responsibility_domain),
            profile.space_id,
        )
        return profile

    def load(self, profiles: Iterable[AgentProfile]) -> None:
        for profile in profiles:
            self._agents[profile.agent_id] = profile

    def agents(self) -> list[AgentProfile]:
        return [self._agents[agent_id] for agent_id in sorted(self._agents)]

    def get_agent(self, agent_id: str) -> AgentProfile:
        try:
            return self._agents[agent_id]
        except KeyError:
            raise UnknownAgent(f"unknown agent {agent_id!r}") from None

    def route(self, request: RouteRequest) -> str:
        """
        Agent whose domain best overlaps the request tags; ties go to the lowest id.

        Raises:
            NoAgents: If nothing is registered
        """
        if not self._agents:
            raise NoAgents("no agents registered")
        best_id, best_score = "", -1.0
        for profile in self.agents():
            score = jaccard(request.tags, profile.responsibility_domain)
            if score > best_score:
                best_id, best_score = profile.agent_id, score
        return best_id

    def unregister(self, agent_id: str) -> None:
        self._agents.pop(agent_id, None)

    def clear(self) -> None:
        self._agents.clear()


def _envelope_id(
    origin_agent: str,
    topic_tags: tuple[str, ...],
    permissions: SharePermission,
    summaries: list[SummaryUnit],
) -> str:
    canonical = json.dumps(
        {
            "origin": origin_agent,
            "topic": list(topic_tags),
            "permissions": permissions.model_dump(mode="json"),
            "units": [
                [s.fact_key, s.text, s.observed_at, list(s.origin_refs)] for s in summaries
            ],
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def shareable_units(store: MemoryStore, topic_tags: Iterable[str]) -> list[MemoryUnit]:
    """Active fact units on the topic that are not tagged private."""
    topic = set(topic_tags)
    return [
        unit
        for unit in store.iter_units([LifecycleState.ACTIVE])
        if unit.kind is UnitKind.FACT
        and PRIVATE_TAG not in unit.preference_tags
        and topic & set(unit.preference_tags)
    ]


def summarize_for_share(
    store: MemoryStore,
    topic_tags: Iterable[str],
    permissions: SharePermission | None = None,
    *,
    origin_agent: str,
    now: int,
    ttl_seconds: int = DEFAULT_TTL_SECONDS,
) -> ShareEnvelope:
    """
    Build an envelope with one summary line per fact key (its newest value).

    Raises:
        EmptySelection: If no shareable unit matches the topic
    """
    permissions = permissions or SharePermission()
    topic = tuple(sorted(set(topic_tags)))
    newest: dict[str, MemoryUnit] = {}
    for unit in shareable_units(store, topic):
        key = unit.fact_key or unit.content
        current = newest.get(key)
        if current is None or (unit.created_at, unit.id) > (current.created_at, current.id):
            newest[key] = unit
    if not newest:
        raise EmptySelection(f"no shareable units in {store.space_id} for {list(topic)}")

    summaries = [
        SummaryUnit(
            fact_key=key,
            text=unit.content,
            embedding=unit.embedding,
            origin_refs=(unit.id,),
            observed_at=unit.created_at,
            tags=unit.preference_tags,
            relation=unit.relation,
            emotion_weight=unit.emotion_weight,
        )
        for key, unit in sorted(newest.items())
    ]
    envelope = ShareEnvelope(
        envelope_id=_envelope_id(origin_agent, topic, permissions, summaries),
        origin_agent=origin_agent,
        topic_tags=topic,
        summary_units=tuple(summaries),
        origin_refs=tuple(sorted(ref for s in summaries for ref in s.origin_refs)),
        created_at=now,
        valid_until=now + ttl_seconds,
        permissions=permissions,
    )
    logger.info(
        "Envelope %s from %s: %d summary unit(s), %s",
        envelope.envelope_id[:12],
        origin_agent,
        len(summaries),
        permissions.kind,
    )
    return envelope


def transmit(envelope: ShareEnvelope, now: int) -> ShareEnvelope:
    """
    Outbound gate for envelopes leaving an agent.

    Raises:
        PermissionDenied: Private envelopes never leave
        Expired: The envelope is past its validity
    """
    if envelope.permissions.kind is PermissionKind.PRIVATE:
        raise PermissionDenied(f"envelope {envelope.envelope_id[:12]} is private")
    if now > envelope.valid_until:
        raise Expired(f"envelope {envelope.envelope_id[:12]} expired at {envelope.valid_until}")
    return envelope


def _anchors_for(summary: SummaryUnit) -> SemanticAnchorSet:
    if summary.relation is None:
        return SemanticAnchorSet(facts=(summary.text,))
    relation = summary.relation
    entities = tuple(
        Entity(surface=arg, kind=EntityKind.STRONG, category="argument")
        for arg in dict.fromkeys((relation.head, relation.tail))
    )
    return SemanticAnchorSet(
        entities=entities,
        triples=(Triple(subject=relation.head, predicate=relation.label, object=relation.tail),),
        facts=(summary.text,),
        relations=(relation,),
    )


def apply_shared(
    envelope: ShareEnvelope,
    store: MemoryStore,
    now: int,
    target_domain: Iterable[str] = (),
) -> ApplyReport:
    """
    Insert an envelope's summaries into ``store`` without overwriting newer local memory.

    Raises:
        PermissionDenied: If the envelope's permissions do not admit ``target_domain``
    """
    if not envelope.permissions.admits(frozenset(target_domain)):
        raise PermissionDenied(
            f"envelope {envelope.envelope_id[:12]} is not shareable with {sorted(target_domain)}"
        )
    report = ApplyReport(envelope_id=envelope.envelope_id)
    if envelope.envelope_id in store.applied_envelopes:
        report.already_applied = True
        return report
    if now > envelope.valid_until:
        report.rejected_expired = len(envelope.summary_units)
        return report

    newest_local: dict[str, int] = {}
    for unit in store.live_units():
        for key in unit.keys:
            newest_local[key] = max(newest_local.get(key, -1), unit.created_at)

    for summary in envelope.summary_units:
        if newest_local.get(summary.fact_key, -1) > summary.observed_at:
            report.rejected_conflict += 1
            continue
        unit = MemoryUnit(
            space_id=store.space_id,
            kind=UnitKind.FACT,
            content=summary.text,
            fact_key=summary.fact_key,
            relation=summary.relation,
            anchors=_anchors_for(summary),
            embedding=summary.embedding,
            created_at=summary.observed_at,
            trace=ActivationTrace.created(max(now, summary.observed_at)),
            emotion_weight=summary.emotion_weight,
            preference_tags=summary.tags,
            provenance=summary.origin_refs,
            source=envelope.origin_agent,
        )
        report.unit_ids.append(store.upsert_unit(unit))
        report.accepted += 1

    store.applied_envelopes.add(envelope.envelope_id)
    store.mark_meta_dirty()
    logger.info(
        "Applied envelope %s to %s: accepted=%d conflict=%d",
        envelope.envelope_id[:12],
        store.space_id,
        report.accepted,
        report.rejected_conflict,
    )
    return report


_hub_service: HubService | None = None


def get_hub_service() -> HubService:
    """Return the process-wide hub registry."""
    global _hub_service
    if _hub_service is None:
        _hub_service = HubService()
    return _hub_service
