"""Lineage traversal: forward/backward traces, ancestors, routes, closure.

All operations are pure functions over an immutable store snapshot and
may run concurrently. The revision/execution graph is a DAG by store
invariant, so every traversal terminates.

Depth bookkeeping: a revision's depth is the number of executions on
the shortest path from the origin; an execution's depth is the depth of
the nearest revision that led to it plus one. Produced (resp. consumed,
when walking backward) revisions therefore share their execution's
depth.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .errors import EntityNotFound
from .model import (
    EntityId,
    EntityKind,
    TracingProperties,
)
from .store import Store

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class PrunePredicate:
    """Match on one declared tracing property, e.g. privacy_preserving=True.

    Unknown property values never match: pruning is conservative.
    Extension-map properties compare against a string value.
    """

    prop: str
    value: bool | str

    def matches(self, props: TracingProperties) -> bool:
        actual = props.value_of(self.prop)
        if actual is None:
            return False
        return actual == self.value


@dataclass(frozen=True)
class TraceOptions:
    prune_on: tuple[PrunePredicate, ...] = ()
    max_depth: int | None = None
    restrict_to_group: EntityId | None = None

    def __post_init__(self) -> None:
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class LineageEdge:
    """One lineage hop, always oriented in data-flow direction."""

    source: EntityId
    target: EntityId
    via_slot: EntityId


@dataclass(frozen=True)
class TraceResult:
    origin: EntityId
    direction: str
    reached: dict[EntityId, int]
    edges: tuple[LineageEdge, ...]
    pruned_at: tuple[tuple[EntityId, str], ...]
    truncated_by_depth: bool

    def reached_revisions(self) -> list[EntityId]:
        return [eid for eid in self.reached if eid.kind is EntityKind.DATASET_REVISION]

    def reached_executions(self) -> list[EntityId]:
        return [eid for eid in self.reached if eid.kind is EntityKind.TRANSFORM_EXECUTION]


@dataclass(frozen=True)
class LineageRoute:
    """Alternating [execution, revision, ..., execution] chain joining two
    revisions; the endpoints themselves are not part of ``steps``."""

    steps: tuple[EntityId, ...]


@dataclass(frozen=True)
class RouteEnumeration:
    routes: tuple[LineageRoute, ...]
    truncated: bool = False


@dataclass(frozen=True)
class ExternalRefs:
    commit_ids: tuple[str, ...] = ()
    blob_ids: tuple[str, ...] = ()
    source_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Closure:
    """Everything needed to reproduce a revision from the outside world."""

    dataset_revisions: tuple[EntityId, ...]
    transform_revisions: tuple[EntityId, ...]
    type_revisions: tuple[EntityId, ...]
    external_refs: ExternalRefs


DEFAULT_ROUTE_LIMIT = 1024

_REV_KIND = EntityKind.DATASET_REVISION
_EXEC_KIND = EntityKind.TRANSFORM_EXECUTION
_SLOT_KIND = EntityKind.TRANSFORM_EXECUTION_SLOT


def _require_revision(store: Store, origin: EntityId) -> None:
    if origin.kind is not _REV_KIND or not store.has(origin):
        raise EntityNotFound(_REV_KIND.value, origin.value)


def _group_allowance(store: Store, group_id: EntityId) -> tuple[set[str], set[str]]:
    """Node values a group-restricted trace may visit.

    Direct member revisions/executions are allowed; member datasets
    admit all their live revisions, member transforms and transform
    revisions admit all their executions.
    """
    from .query import group_members  # local import, avoids module cycle

    allowed_revisions: set[str] = set()
    allowed_executions: set[str] = set()
    transform_revision_values: set[str] = set()
    for member in group_members(store, group_id, recursive=True):
        if member.kind is _REV_KIND:
            allowed_revisions.add(member.value)
        elif member.kind is _EXEC_KIND:
            allowed_executions.add(member.value)
        elif member.kind is EntityKind.DATASET:
            allowed_revisions.update(store.revisions_by_dataset.get(member.value, ()))
        elif member.kind is EntityKind.TRANSFORM_REVISION:
            transform_revision_values.add(member.value)
        elif member.kind is EntityKind.TRANSFORM:
            transform_revision_values.update(store.revisions_by_transform.get(member.value, ()))
    if transform_revision_values:
        for value, execution in store.entities[_EXEC_KIND].items():
            if execution.transform_revision_id.value in transform_revision_values:
                allowed_executions.add(value)
    return allowed_revisions, allowed_executions


def _trace(store: Store, origin: EntityId, opts: TraceOptions, forward: bool) -> TraceResult:
    _require_revision(store, origin)

    allowed: tuple[set[str], set[str]] | None = None
    if opts.restrict_to_group is not None:
        allowed = _group_allowance(store, opts.restrict_to_group)
        allowed[0].add(origin.value)

    # 0-1 BFS: consuming (forward) or producing (backward) an execution
    # costs one level, an execution reaching its revisions costs zero.
    dist: dict[tuple[bool, str], int] = {(False, origin.value): 0}
    expanded: set[tuple[bool, str]] = set()
    queue: deque[tuple[int, bool, str]] = deque([(0, False, origin.value)])
    edges: list[LineageEdge] = []
    pruned_at: list[tuple[EntityId, str]] = []
    truncated = False

    def neighbors(is_exec: bool, value: str) -> list[tuple[bool, str, int, str, bool]]:
        """(neighbor_is_exec, value, cost, via_slot, flow_source_is_self)."""
        out = []
        if forward:
            if not is_exec:
                for slot_value in store.consuming_slots(value):
                    exec_value = store.execution_slot(slot_value).transform_execution_id.value
                    out.append((True, exec_value, 1, slot_value, True))
            else:
                for slot_value, rev_value in store.execution_outputs(value):
                    out.append((False, rev_value, 0, slot_value, True))
        else:
            if not is_exec:
                producer = store.producer_of(value)
                if producer is not None:
                    slot_value, exec_value = producer
                    out.append((True, exec_value, 1, slot_value, False))
            else:
                for slot_value, rev_value in store.execution_inputs(value):
                    out.append((False, rev_value, 0, slot_value, False))
        return out

    def is_blocked(neighbor_is_exec: bool, value: str) -> bool:
        if allowed is None:
            return False
        pool = allowed[1] if neighbor_is_exec else allowed[0]
        return value not in pool

    while queue:
        depth, is_exec, value = queue.popleft()
        node = (is_exec, value)
        if node in expanded or dist.get(node, depth) < depth:
            continue
        expanded.add(node)

        if is_exec:
            pruned = _pruned_properties(store, value, opts.prune_on)
            if pruned:
                exec_id = EntityId(_EXEC_KIND, value)
                pruned_at.extend((exec_id, prop) for prop in pruned)
                continue

        for neighbor_is_exec, neighbor_value, cost, slot_value, source_is_self in neighbors(
            is_exec, value
        ):
            if is_blocked(neighbor_is_exec, neighbor_value):
                continue
            neighbor = (neighbor_is_exec, neighbor_value)
            new_depth = depth + cost
            if neighbor not in dist:
                if opts.max_depth is not None and new_depth > opts.max_depth:
                    truncated = True
                    continue
                dist[neighbor] = new_depth
                if cost == 0:
                    queue.appendleft((new_depth, neighbor_is_exec, neighbor_value))
                else:
                    queue.append((new_depth, neighbor_is_exec, neighbor_value))
            self_id = EntityId(_EXEC_KIND if is_exec else _REV_KIND, value)
            other_id = EntityId(_EXEC_KIND if neighbor_is_exec else _REV_KIND, neighbor_value)
            source_id, target_id = (self_id, other_id) if source_is_self else (other_id, self_id)
            edges.append(LineageEdge(source_id, target_id, EntityId(_SLOT_KIND, slot_value)))

    reached = {
        EntityId(_EXEC_KIND if is_exec else _REV_KIND, value): depth
        for (is_exec, value), depth in dist.items()
    }
    return TraceResult(
        origin=origin,
        direction=FORWARD if forward else BACKWARD,
        reached=reached,
        edges=tuple(edges),
        pruned_at=tuple(pruned_at),
        truncated_by_depth=truncated,
    )


def _pruned_properties(store: Store, exec_value: str, predicates) -> list[str]:
    if not predicates:
        return []
    execution = store.execution(exec_value)
    props = store.transform_revision(execution.transform_revision_id.value).tracing_properties
    return [p.prop for p in predicates if p.matches(props)]


def forward_trace(store: Store, origin: EntityId, opts: TraceOptions = TraceOptions()) -> TraceResult:
    """Everything derived from the origin revision via consume/produce edges."""
    return _trace(store, origin, opts, forward=True)


def backward_trace(store: Store, origin: EntityId, opts: TraceOptions = TraceOptions()) -> TraceResult:
    """Everything the origin revision was derived from."""
    return _trace(store, origin, opts, forward=False)


def ancestors(store: Store, revision: EntityId, dataset: EntityId) -> list[EntityId]:
    """Revisions of ``dataset`` the given revision descends from.

    Ordered by dataset sequence; empty when the two are unrelated. A
    revision is never its own ancestor.
    """
    _require_revision(store, revision)
    if dataset.kind is not EntityKind.DATASET or not store.has(dataset):
        raise EntityNotFound(EntityKind.DATASET.value, dataset.value)
    reached = backward_trace(store, revision).reached
    members = store.revisions_by_dataset.get(dataset.value, ())
    out = [
        EntityId(_REV_KIND, value)
        for value in members
        if (rid := EntityId(_REV_KIND, value)) in reached and rid != revision
    ]
    return out


def lineage_route(
    store: Store,
    target: EntityId,
    source: EntityId,
    limit: int | None = DEFAULT_ROUTE_LIMIT,
) -> RouteEnumeration:
    """All simple alternating routes carrying ``source`` into ``target``.

    Follows the convention of the two-argument lineage question "how
    does the descendant (first argument) derive from the ancestor
    (second argument)": each returned route starts with an execution
    consuming ``source`` and ends with the execution producing
    ``target``. Enumeration is lexicographic by step id; ``limit``
    (default 1024) caps the enumeration and sets ``truncated``.
    """
    _require_revision(store, target)
    _require_revision(store, source)
    if target == source:
        raise ValueError("route endpoints must differ")
    cap = limit if limit is not None else DEFAULT_ROUTE_LIMIT

    # Only walk nodes that can still reach the target.
    useful = {
        (eid.kind is _EXEC_KIND, eid.value)
        for eid in backward_trace(store, target).reached
    }

    routes: list[LineageRoute] = []
    truncated = False

    def successors(is_exec: bool, value: str) -> list[tuple[bool, str]]:
        if is_exec:
            return [(False, rev) for _, rev in store.execution_outputs(value)]
        unordered = {
            store.execution_slot(slot).transform_execution_id.value
            for slot in store.consuming_slots(value)
        }
        return [(True, exec_value) for exec_value in sorted(unordered)]

    start = (False, source.value)
    if start not in useful:
        return RouteEnumeration(())

    path: list[tuple[bool, str]] = [start]
    on_path = {start}
    stack: list[Iterable[tuple[bool, str]]] = [iter(successors(False, source.value))]

    while stack:
        try:
            node = next(stack[-1])  # type: ignore[arg-type]
        except StopIteration:
            stack.pop()
            dropped = path.pop()
            on_path.discard(dropped)
            continue
        if node not in useful or node in on_path:
            continue
        if node == (False, target.value):
            steps = tuple(
                EntityId(_EXEC_KIND if is_exec else _REV_KIND, value) for is_exec, value in path[1:]
            )
            if len(routes) >= cap:
                truncated = True
                break
            routes.append(LineageRoute(steps))
            continue
        path.append(node)
        on_path.add(node)
        stack.append(iter(successors(*node)))

    return RouteEnumeration(tuple(routes), truncated)


def environment_closure(store: Store, revision: EntityId) -> Closure:
    """Full reproduction context for a revision.

    The unpruned backward cone: every contributing dataset revision,
    the transform revision behind every contributing execution, all
    type revisions referenced by either, and the external identifiers
    (code commits, blobs, import sources) needed to re-run the chain.
    """
    trace = backward_trace(store, revision)

    revision_ids = sorted(trace.reached_revisions())
    execution_ids = sorted(trace.reached_executions())

    transform_revision_values = sorted(
        {store.execution(e.value).transform_revision_id.value for e in execution_ids}
    )

    type_revision_values: set[str] = set()
    blob_ids: set[str] = set()
    source_ids: set[str] = set()
    for rid in revision_ids:
        rev = store.revision(rid.value)
        type_revision_values.add(rev.type_revision_id.value)
        blob_ids.add(rev.external_blob_id)
        if rev.external_source_id is not None:
            source_ids.add(rev.external_source_id)

    commit_ids: set[str] = set()
    for trev_value in transform_revision_values:
        trev = store.transform_revision(trev_value)
        commit_ids.add(trev.external_commit_id)
        for slot_value in store.declared_slot_values(trev_value):
            type_revision_values.add(store.transform_slot(slot_value).type_revision_id.value)

    return Closure(
        dataset_revisions=tuple(revision_ids),
        transform_revisions=tuple(
            EntityId(EntityKind.TRANSFORM_REVISION, v) for v in transform_revision_values
        ),
        type_revisions=tuple(
            EntityId(EntityKind.TYPE_REVISION, v) for v in sorted(type_revision_values)
        ),
        external_refs=ExternalRefs(
            commit_ids=tuple(sorted(commit_ids)),
            blob_ids=tuple(sorted(blob_ids)),
            source_ids=tuple(sorted(source_ids)),
        ),
    )


def impacted_leaves(store: Store, revision: EntityId) -> list[EntityId]:
    """Derivative revisions nobody consumes: the notification frontier."""
    trace = forward_trace(store, revision)
    return sorted(
        eid for eid in trace.reached_revisions() if not store.consuming_slots(eid.value)
    )
