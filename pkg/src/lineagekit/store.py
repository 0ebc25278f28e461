"""Immutable point-in-time snapshot of all live entities.

A store is produced by the changelog and never mutated; queries and
traversals run against it concurrently without coordination. Besides
the entity maps it carries four derived indexes that are exactly
rebuildable from the live entity set (``build_store`` recomputes them;
tests assert equality against incrementally maintained ones).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .model import (
    Dataset,
    DatasetRevision,
    Direction,
    EntityId,
    EntityKind,
    EntityRecord,
    Transform,
    TransformExecution,
    TransformExecutionSlot,
    TransformRevision,
    TransformSlot,
    entity_id,
)


@dataclass(frozen=True)
class Store:
    """Live entities plus derived lineage indexes.

    Index conventions (all keys/values are id *values*, kinds implied):

    - ``revisions_by_dataset``: dataset -> revision ids ordered by sequence
    - ``revisions_by_transform``: transform -> revision ids ordered by sequence
    - ``consumers_by_revision``: revision -> input-direction execution slot
      ids, sorted (only revisions with at least one consumer appear)
    - ``slots_by_execution``: execution -> execution slot ids, sorted
    - ``slots_by_transform_revision``: transform revision -> declared
      transform slot ids, sorted
    """

    entities: dict[EntityKind, dict[str, EntityRecord]] = field(
        default_factory=lambda: {kind: {} for kind in EntityKind}
    )
    revisions_by_dataset: dict[str, tuple[str, ...]] = field(default_factory=dict)
    revisions_by_transform: dict[str, tuple[str, ...]] = field(default_factory=dict)
    consumers_by_revision: dict[str, tuple[str, ...]] = field(default_factory=dict)
    slots_by_execution: dict[str, tuple[str, ...]] = field(default_factory=dict)
    slots_by_transform_revision: dict[str, tuple[str, ...]] = field(default_factory=dict)
    last_seq: int = 0

    # -- lookups ---------------------------------------------------------

    def get(self, eid: EntityId) -> EntityRecord | None:
        return self.entities[eid.kind].get(eid.value)

    def has(self, eid: EntityId) -> bool:
        return eid.value in self.entities[eid.kind]

    def kind_of(self, kind: EntityKind) -> dict[str, EntityRecord]:
        return self.entities[kind]

    def iter_all(self) -> Iterator[EntityRecord]:
        for kind in EntityKind:
            yield from self.entities[kind].values()

    def count(self) -> int:
        return sum(len(per_kind) for per_kind in self.entities.values())

    # -- typed accessors used by traversal code --------------------------

    def dataset(self, value: str) -> Dataset:
        return self.entities[EntityKind.DATASET][value]  # type: ignore[return-value]

    def revision(self, value: str) -> DatasetRevision:
        return self.entities[EntityKind.DATASET_REVISION][value]  # type: ignore[return-value]

    def transform(self, value: str) -> Transform:
        return self.entities[EntityKind.TRANSFORM][value]  # type: ignore[return-value]

    def transform_revision(self, value: str) -> TransformRevision:
        return self.entities[EntityKind.TRANSFORM_REVISION][value]  # type: ignore[return-value]

    def execution(self, value: str) -> TransformExecution:
        return self.entities[EntityKind.TRANSFORM_EXECUTION][value]  # type: ignore[return-value]

    def execution_slot(self, value: str) -> TransformExecutionSlot:
        return self.entities[EntityKind.TRANSFORM_EXECUTION_SLOT][value]  # type: ignore[return-value]

    def transform_slot(self, value: str) -> TransformSlot:
        return self.entities[EntityKind.TRANSFORM_SLOT][value]  # type: ignore[return-value]

    def slot_direction(self, exec_slot: TransformExecutionSlot) -> Direction:
        return self.transform_slot(exec_slot.transform_slot_id.value).direction

    # -- edge navigation --------------------------------------------------

    def consuming_slots(self, revision_value: str) -> tuple[str, ...]:
        """Input-direction execution slot ids bound to the revision."""
        return self.consumers_by_revision.get(revision_value, ())

    def execution_inputs(self, execution_value: str) -> list[tuple[str, str]]:
        """(slot id, revision id) pairs consumed by the execution, sorted."""
        return self._execution_bindings(execution_value, Direction.INPUT)

    def execution_outputs(self, execution_value: str) -> list[tuple[str, str]]:
        """(slot id, revision id) pairs produced by the execution, sorted."""
        return self._execution_bindings(execution_value, Direction.OUTPUT)

    def _execution_bindings(self, execution_value: str, direction: Direction) -> list[tuple[str, str]]:
        out = []
        for slot_value in self.slots_by_execution.get(execution_value, ()):
            exec_slot = self.execution_slot(slot_value)
            if self.slot_direction(exec_slot) is direction:
                out.append((slot_value, exec_slot.dataset_revision_id.value))
        return out

    def producer_of(self, revision_value: str) -> tuple[str, str] | None:
        """(execution slot id, execution id) producing the revision, if any."""
        rev = self.revision(revision_value)
        if rev.producer_slot_id is None:
            return None
        exec_slot = self.execution_slot(rev.producer_slot_id.value)
        return rev.producer_slot_id.value, exec_slot.transform_execution_id.value

    # -- validation view (see validation.StoreView) -----------------------

    def dataset_revision_values(self, dataset_value: str) -> tuple[str, ...]:
        return self.revisions_by_dataset.get(dataset_value, ())

    def transform_revision_values(self, transform_value: str) -> tuple[str, ...]:
        return self.revisions_by_transform.get(transform_value, ())

    def declared_slot_values(self, transform_revision_value: str) -> tuple[str, ...]:
        return self.slots_by_transform_revision.get(transform_revision_value, ())

    def dataset_sequence_taken(self, dataset_value: str, sequence: int, self_value: str) -> bool:
        return _sequence_taken(
            self.entities[EntityKind.DATASET_REVISION],
            self.revisions_by_dataset.get(dataset_value, ()),
            sequence,
            self_value,
        )

    def transform_sequence_taken(self, transform_value: str, sequence: int, self_value: str) -> bool:
        return _sequence_taken(
            self.entities[EntityKind.TRANSFORM_REVISION],
            self.revisions_by_transform.get(transform_value, ()),
            sequence,
            self_value,
        )


def _sequence_taken(
    records: dict[str, EntityRecord],
    ordered_values: tuple[str, ...],
    sequence: int,
    self_value: str,
) -> bool:
    """Binary search the sequence-ordered sibling list for a collision."""
    lo, hi = 0, len(ordered_values)
    while lo < hi:
        mid = (lo + hi) // 2
        if (records[ordered_values[mid]].sequence or 0) < sequence:
            lo = mid + 1
        else:
            hi = mid
    while lo < len(ordered_values) and (records[ordered_values[lo]].sequence or 0) == sequence:
        if ordered_values[lo] != self_value:
            return True
        lo += 1
    return False


def empty_store() -> Store:
    return Store()


def build_indexes(
    entities: dict[EntityKind, dict[str, EntityRecord]],
) -> tuple[
    dict[str, tuple[str, ...]],
    dict[str, tuple[str, ...]],
    dict[str, tuple[str, ...]],
    dict[str, tuple[str, ...]],
    dict[str, tuple[str, ...]],
]:
    """Recompute all derived indexes from scratch."""
    by_dataset: dict[str, list[tuple[int, str]]] = {}
    for rev in entities[EntityKind.DATASET_REVISION].values():
        assert isinstance(rev, DatasetRevision)
        by_dataset.setdefault(rev.dataset_id.value, []).append(
            (rev.sequence or 0, rev.header.id.value)
        )
    revisions_by_dataset = {
        ds: tuple(value for _, value in sorted(pairs)) for ds, pairs in by_dataset.items()
    }

    by_transform: dict[str, list[tuple[int, str]]] = {}
    for trev in entities[EntityKind.TRANSFORM_REVISION].values():
        assert isinstance(trev, TransformRevision)
        by_transform.setdefault(trev.transform_id.value, []).append(
            (trev.sequence or 0, trev.header.id.value)
        )
    revisions_by_transform = {
        tr: tuple(value for _, value in sorted(pairs)) for tr, pairs in by_transform.items()
    }

    consumers: dict[str, list[str]] = {}
    slots: dict[str, list[str]] = {}
    transform_slots = entities[EntityKind.TRANSFORM_SLOT]
    for exec_slot in entities[EntityKind.TRANSFORM_EXECUTION_SLOT].values():
        assert isinstance(exec_slot, TransformExecutionSlot)
        slot_value = exec_slot.header.id.value
        slots.setdefault(exec_slot.transform_execution_id.value, []).append(slot_value)
        declared = transform_slots[exec_slot.transform_slot_id.value]
        assert isinstance(declared, TransformSlot)
        if declared.direction is Direction.INPUT:
            consumers.setdefault(exec_slot.dataset_revision_id.value, []).append(slot_value)

    consumers_by_revision = {rev: tuple(sorted(vals)) for rev, vals in consumers.items()}
    slots_by_execution = {ex: tuple(sorted(vals)) for ex, vals in slots.items()}

    declared: dict[str, list[str]] = {}
    for slot in entities[EntityKind.TRANSFORM_SLOT].values():
        assert isinstance(slot, TransformSlot)
        declared.setdefault(slot.transform_revision_id.value, []).append(slot.header.id.value)
    slots_by_transform_revision = {tr: tuple(sorted(vals)) for tr, vals in declared.items()}

    return (
        revisions_by_dataset,
        revisions_by_transform,
        consumers_by_revision,
        slots_by_execution,
        slots_by_transform_revision,
    )


def build_store(records: Iterable[EntityRecord], last_seq: int = 0) -> Store:
    """Assemble a store from records, deriving every index."""
    entities: dict[EntityKind, dict[str, EntityRecord]] = {kind: {} for kind in EntityKind}
    for record in records:
        entities[record.KIND][entity_id(record).value] = record
    by_ds, by_tr, consumers, slots, declared = build_indexes(entities)
    return Store(
        entities=entities,
        revisions_by_dataset=by_ds,
        revisions_by_transform=by_tr,
        consumers_by_revision=consumers,
        slots_by_execution=slots,
        slots_by_transform_revision=declared,
        last_seq=last_seq,
    )
