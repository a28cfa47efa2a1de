"""Forgetting engine: retention sweeps, soft deletion, compression and edge weakening."""

from __future__ import annotations

import logging

from app.errors import NotSoftDeleted
from app.models.activation import ActivationParams
from app.models.graph import EdgeValidity, GraphEdge
from app.models.maintenance import ForgetReport
from app.models.memory import LifecycleState, MemoryUnit
from app.services.activation_service import record_access, unit_retention
from app.services.graph_store import MemoryStore
from app.services.prune_service import compress_unit

logger = logging.getLogger(__name__)

PINNED_TAG = "pinned"
SALIENT_EMOTION = 0.5
DEFAULT_GRACE_SECONDS = 7 * 86400


def is_pinned(unit: MemoryUnit) -> bool:
    return PINNED_TAG in unit.preference_tags


def _weaken(edge: GraphEdge, now: int, ceiling: float, failed_strength: float) -> GraphEdge:
    strength = edge.strength / 2.0
    if strength < failed_strength:
        return edge.model_copy(
            update={"strength": 0.0, "validity": EdgeValidity.FAILED, "weakened_at": now}
        )
    validity = EdgeValidity.WEAKENED if strength < ceiling else edge.validity
    return edge.model_copy(update={"strength": strength, "validity": validity, "weakened_at": now})


def sweep(
    store: MemoryStore,
    now: int,
    params: ActivationParams | None = None,
    grace: int = DEFAULT_GRACE_SECONDS,
    *,
    weaken_ceiling: float = 1.0,
    failed_strength: float = 0.01,
    dry_run: bool = False,
) -> ForgetReport:
    """
    One forgetting pass at ``now``.

    Active units whose retention drops below the threshold become PendingForget.
    PendingForget units past ``grace`` seconds are Compressed when they have
    several sources or salient emotion, SoftDeleted otherwise. Edges left without
    an Active source lose half their strength, at most once per time unit.
    Units tagged ``pinned`` are exempt.

    With ``dry_run`` the pass runs on a copy and the store is untouched.
    """
    params = params or store.params
    target = store.clone() if dry_run else store
    report = ForgetReport(dry_run=dry_run)

    for unit in list(target.iter_units([LifecycleState.PENDING_FORGET])):
        if is_pinned(unit) or unit.pending_since is None or now - unit.pending_since <= grace:
            continue
        if len(unit.provenance) > 1 or unit.emotion_weight >= SALIENT_EMOTION:
            compress_unit(target, unit, now, unit.superseded_by)
            report.to_compressed.append(unit.id)
        else:
            target.replace_unit(unit.transition(LifecycleState.SOFT_DELETED))
            report.to_soft_deleted.append(unit.id)

    for unit in list(target.iter_units([LifecycleState.ACTIVE])):
        if is_pinned(unit):
            continue
        if unit_retention(unit, now, params) < params.forget_threshold:
            target.replace_unit(unit.transition(LifecycleState.PENDING_FORGET, pending_since=now))
            report.to_pending.append(unit.id)

    for edge_id in sorted(target.edges):
        edge = target.edges[edge_id]
        if edge.validity is EdgeValidity.FAILED:
            continue
        if edge.weakened_at is not None and now - edge.weakened_at < params.time_unit_seconds:
            continue
        sources = [target.units.get(target.resolve_unit_id(u)) for u in edge.source_units]
        if any(u is not None and u.state is LifecycleState.ACTIVE for u in sources):
            continue
        weakened = _weaken(edge, now, weaken_ceiling, failed_strength)
        target.set_edge(weakened)
        if weakened.validity is EdgeValidity.FAILED:
            report.edges_failed.append(edge_id)
        else:
            report.edges_weakened.append(edge_id)

    if report.mutation_count:
        logger.info(
            "Sweep %s at %s%s: pending=%d soft_deleted=%d compressed=%d weakened=%d failed=%d",
            store.space_id,
            now,
            " (dry run)" if dry_run else "",
            len(report.to_pending),
            len(report.to_soft_deleted),
            len(report.to_compressed),
            len(report.edges_weakened),
            len(report.edges_failed),
        )
    return report


def restore(store: MemoryStore, unit_id: str, now: int) -> MemoryUnit:
    """
    Undo a soft deletion; the restore counts as an access.

    Raises:
        UnknownUnit: If the id does not resolve
        NotSoftDeleted: If the unit is in any other state
    """
    unit = store.get_unit(unit_id)
    if unit.state is not LifecycleState.SOFT_DELETED:
        raise NotSoftDeleted(f"unit {unit.id} is {unit.state}, not SoftDeleted")
    restored = unit.transition(
        LifecycleState.ACTIVE,
        trace=record_access(unit.trace, now, store.params.history_cap),
    )
    store.replace_unit(restored)

    for edge_id in sorted(store.edges_of_unit(restored.id)):
        edge = store.edges[edge_id]
        if edge.validity is not EdgeValidity.FAILED or _superseded(store, edge):
            continue
        store.set_edge(
            edge.model_copy(
                update={"strength": 1.0, "validity": EdgeValidity.VALID, "weakened_at": None}
            )
        )
    logger.info("Restored unit %s in space %s", restored.id, store.space_id)
    return restored


def _superseded(store: MemoryStore, edge: GraphEdge) -> bool:
    if edge.relation_label not in store.functional_relations:
        return False
    return any(
        other.id != edge.id
        and other.validity is not EdgeValidity.FAILED
        and other.head == edge.head
        and other.relation_label == edge.relation_label
        and (other.timestamp, other.id) > (edge.timestamp, edge.id)
        for other in store.edges.values()
    )
