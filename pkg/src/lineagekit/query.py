"""Reference resolution, group semantics, and deprecation reporting."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyDataset, EntityNotFound, IndexOutOfRange, RevisionNotInDataset, UnsupportedKind
from .model import EntityId, EntityKind
from .store import Store
from .tracing import forward_trace

BY_ID = "by_id"
EARLIEST = "earliest"
LATEST = "latest"
HEAD_MINUS = "head_minus"


@dataclass(frozen=True)
class RevisionSelector:
    """Addresses one revision of a dataset, absolutely or relatively.

    ``head_minus(0)`` is ``latest``; ``head_minus(k)`` is the revision
    with the (k+1)-th highest sequence among live revisions.
    """

    dataset: EntityId
    mode: str
    revision_id: EntityId | None = None
    k: int = 0

    @classmethod
    def by_id(cls, dataset: EntityId, revision_id: EntityId) -> "RevisionSelector":
        return cls(dataset, BY_ID, revision_id=revision_id)

    @classmethod
    def earliest(cls, dataset: EntityId) -> "RevisionSelector":
        return cls(dataset, EARLIEST)

    @classmethod
    def latest(cls, dataset: EntityId) -> "RevisionSelector":
        return cls(dataset, LATEST)

    @classmethod
    def head_minus(cls, dataset: EntityId, k: int) -> "RevisionSelector":
        if k < 0:
            raise ValueError("head offset must be non-negative")
        return cls(dataset, HEAD_MINUS, k=k)


def resolve_revision(store: Store, selector: RevisionSelector) -> EntityId:
    """Resolve a selector against the live revisions of its dataset."""
    dataset = selector.dataset
    if dataset.kind is not EntityKind.DATASET or not store.has(dataset):
        raise EntityNotFound(EntityKind.DATASET.value, dataset.value)

    if selector.mode == BY_ID:
        assert selector.revision_id is not None
        revision = store.get(selector.revision_id)
        if revision is None:
            raise EntityNotFound(EntityKind.DATASET_REVISION.value, selector.revision_id.value)
        if revision.dataset_id != dataset:
            raise RevisionNotInDataset(selector.revision_id.value, dataset.value)
        return selector.revision_id

    live = store.revisions_by_dataset.get(dataset.value, ())
    if not live:
        raise EmptyDataset(dataset.value)
    if selector.mode == EARLIEST:
        return EntityId(EntityKind.DATASET_REVISION, live[0])
    k = 0 if selector.mode == LATEST else selector.k
    if k >= len(live):
        raise IndexOutOfRange(k, len(live))
    return EntityId(EntityKind.DATASET_REVISION, live[len(live) - 1 - k])


def group_members(store: Store, group: EntityId, recursive: bool = False) -> list[EntityId]:
    """Items of a group; with ``recursive`` the deduplicated depth-first
    flattening of nested groups, groups themselves excluded."""
    record = store.get(group)
    if group.kind is not EntityKind.GROUP or record is None:
        raise EntityNotFound(EntityKind.GROUP.value, group.value)
    if not recursive:
        return list(record.items)

    out: list[EntityId] = []
    seen: set[EntityId] = set()
    visited_groups: set[str] = set()

    def walk(items: tuple[EntityId, ...]) -> None:
        for item in items:
            if item.kind is EntityKind.GROUP:
                # commit-time validation keeps membership acyclic; the
                # visited set doubles as a defensive guard
                if item.value in visited_groups:
                    continue
                visited_groups.add(item.value)
                nested = store.get(item)
                if nested is not None:
                    walk(nested.items)
            elif item not in seen:
                seen.add(item)
                out.append(item)

    visited_groups.add(group.value)
    walk(record.items)
    return out


@dataclass(frozen=True)
class DeprecationReport:
    """Who is affected when an entity is retired.

    ``dependents`` pairs every downstream revision/execution with its
    shortest lineage distance; ``leaves_to_notify`` are the unconsumed
    frontier revisions whose external consumers should be told.
    """

    dependents: tuple[tuple[EntityId, int], ...]
    leaves_to_notify: tuple[EntityId, ...]


def deprecation_report(store: Store, entity: EntityId) -> DeprecationReport:
    record = store.get(entity)
    if record is None:
        raise EntityNotFound(entity.kind.value, entity.value)

    if entity.kind is EntityKind.DATASET_REVISION:
        origins = [entity]
        include_origins = False
    elif entity.kind is EntityKind.DATASET:
        origins = [
            EntityId(EntityKind.DATASET_REVISION, value)
            for value in store.revisions_by_dataset.get(entity.value, ())
        ]
        include_origins = False
    elif entity.kind is EntityKind.TRANSFORM_REVISION:
        origins = _execution_outputs_of_transform_revisions(store, [entity.value])
        include_origins = True
    elif entity.kind is EntityKind.TRANSFORM:
        origins = _execution_outputs_of_transform_revisions(
            store, list(store.revisions_by_transform.get(entity.value, ()))
        )
        include_origins = True
    else:
        raise UnsupportedKind(entity.kind.value, "deprecation_report")

    depths: dict[EntityId, int] = {}
    leaves: set[EntityId] = set()
    for origin in origins:
        trace = forward_trace(store, origin)
        for node, depth in trace.reached.items():
            if node == origin and not include_origins:
                continue
            if node not in depths or depth < depths[node]:
                depths[node] = depth
        for rev in trace.reached_revisions():
            if rev == origin and not include_origins:
                continue
            if not store.consuming_slots(rev.value):
                leaves.add(rev)

    dependents = tuple(
        sorted(depths.items(), key=lambda pair: (pair[1], pair[0].kind.value, pair[0].value))
    )
    return DeprecationReport(dependents=dependents, leaves_to_notify=tuple(sorted(leaves)))


def _execution_outputs_of_transform_revisions(
    store: Store, transform_revision_values: list[str]
) -> list[EntityId]:
    wanted = set(transform_revision_values)
    out: list[EntityId] = []
    seen: set[str] = set()
    for exec_value, execution in sorted(store.entities[EntityKind.TRANSFORM_EXECUTION].items()):
        if execution.transform_revision_id.value not in wanted:
            continue
        for _, rev_value in store.execution_outputs(exec_value):
            if rev_value not in seen:
                seen.add(rev_value)
                out.append(EntityId(EntityKind.DATASET_REVISION, rev_value))
    return out
