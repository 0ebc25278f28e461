"""Per-entity and cross-entity invariant checking.

Checks are report-returning, never raising: each broken rule becomes a
:class:`Violation` carrying the entity, field, and rule name. Broken
references and structural rules are errors; type compatibility between
a declared slot and a bound revision is only a warning because type
definitions are opaque to the engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol

from .ids import is_valid_id_value
from .model import (
    NAMED_TRACING_PROPERTIES,
    REFERENCE_FIELDS,
    Dataset,
    DatasetRevision,
    Direction,
    EntityId,
    EntityKind,
    EntityRecord,
    FlowExecution,
    Group,
    Identity,
    TransformExecutionSlot,
    TransformRevision,
    TransformSlot,
    TypeDef,
    entity_id,
)

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Violation:
    severity: str
    rule: str
    entity_id: EntityId | None
    field: str | None
    message: str

    def __str__(self) -> str:
        where = f" [{self.entity_id}]" if self.entity_id else ""
        return f"{self.severity}: {self.rule}{where}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == ERROR]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == WARNING]

    def add(
        self,
        severity: str,
        rule: str,
        entity: EntityId | None,
        field_name: str | None,
        message: str,
    ) -> None:
        self.violations.append(Violation(severity, rule, entity, field_name, message))

    def extend(self, violations: Iterable[Violation]) -> None:
        self.violations.extend(violations)

    def summary(self) -> str:
        if not self.violations:
            return "ok"
        return "; ".join(str(v) for v in self.violations[:8]) + (
            f" (+{len(self.violations) - 8} more)" if len(self.violations) > 8 else ""
        )


class StoreView(Protocol):
    """What validation needs to see of a (candidate) store."""

    def get(self, eid: EntityId) -> EntityRecord | None: ...

    def dataset_sequence_taken(self, dataset_value: str, sequence: int, self_value: str) -> bool: ...

    def transform_sequence_taken(
        self, transform_value: str, sequence: int, self_value: str
    ) -> bool: ...

    def declared_slot_values(self, transform_revision_value: str) -> Iterable[str]: ...


def validate_record(record: EntityRecord, view: StoreView) -> list[Violation]:
    """All per-entity rules for one record against a store view."""
    out: list[Violation] = []
    eid = entity_id(record)

    if not is_valid_id_value(eid.value):
        out.append(Violation(ERROR, "invalid-id", eid, "id", f"malformed id value {eid.value!r}"))

    header = record.header
    if header.termination_sla is not None and not header.deprecated:
        out.append(
            Violation(
                ERROR,
                "termination-sla-without-deprecation",
                eid,
                "termination_sla",
                "termination_sla is only meaningful on deprecated entities",
            )
        )

    resolved: dict[str, EntityRecord] = {}
    for field_name, expected_kind, optional in REFERENCE_FIELDS[record.KIND]:
        value: EntityId | None = getattr(record, field_name)
        if value is None:
            if not optional:
                out.append(
                    Violation(ERROR, "missing-reference", eid, field_name, "required reference unset")
                )
            continue
        if value.kind is not expected_kind:
            out.append(
                Violation(
                    ERROR,
                    "reference-kind-mismatch",
                    eid,
                    field_name,
                    f"expected {expected_kind.value}, got {value.kind.value}",
                )
            )
            continue
        target = view.get(value)
        if target is None:
            out.append(
                Violation(ERROR, "unknown-reference", eid, field_name, f"{value} does not resolve")
            )
        else:
            resolved[field_name] = target

    kind_check = _KIND_CHECKS.get(record.KIND)
    if kind_check is not None:
        kind_check(record, view, resolved, out)
    return out


def validate_entity(entity: EntityRecord, store: StoreView) -> ValidationReport:
    """Report every invariant the entity violates against the store."""
    report = ValidationReport()
    report.extend(validate_record(entity, store))
    return report


def validate_all(view: StoreView, records: Iterable[EntityRecord]) -> list[Violation]:
    out: list[Violation] = []
    for record in records:
        out.extend(validate_record(record, view))
    return out


# ---------------------------------------------------------------------------
# kind-specific rules


def _require_name(record, eid, field_name, out) -> None:
    if not getattr(record, field_name):
        out.append(Violation(ERROR, "empty-field", eid, field_name, f"{field_name} must be non-empty"))


def _check_type(record: TypeDef, view, resolved, out) -> None:
    _require_name(record, entity_id(record), "name", out)


def _check_dataset(record: Dataset, view, resolved, out) -> None:
    _require_name(record, entity_id(record), "name", out)


def _check_named(record, view, resolved, out) -> None:
    _require_name(record, entity_id(record), "name", out)


def _check_identity(record: Identity, view, resolved, out) -> None:
    _require_name(record, entity_id(record), "external_actor_id", out)


def _check_dataset_revision(record: DatasetRevision, view: StoreView, resolved, out) -> None:
    eid = entity_id(record)

    has_producer = record.producer_slot_id is not None
    has_source = record.external_source_id is not None
    if has_producer == has_source:
        out.append(
            Violation(
                ERROR,
                "exclusive-origin",
                eid,
                "producer_slot_id",
                "exactly one of producer_slot_id / external_source_id must be set",
            )
        )

    if record.sequence is None:
        out.append(Violation(ERROR, "missing-sequence", eid, "sequence", "sequence not assigned"))
    elif record.sequence < 1:
        out.append(Violation(ERROR, "invalid-sequence", eid, "sequence", "sequence must be >= 1"))
    elif record.dataset_id is not None and view.dataset_sequence_taken(
        record.dataset_id.value, record.sequence, eid.value
    ):
        out.append(
            Violation(
                ERROR,
                "duplicate-sequence",
                eid,
                "sequence",
                f"sequence {record.sequence} already used within the dataset",
            )
        )

    dataset = resolved.get("dataset_id")
    type_revision = resolved.get("type_revision_id")
    if dataset is not None and type_revision is not None:
        if type_revision.type_id != dataset.type_id:
            out.append(
                Violation(
                    ERROR,
                    "dataset-type-mismatch",
                    eid,
                    "type_revision_id",
                    "revision's type revision does not belong to the dataset's type",
                )
            )

    producer = resolved.get("producer_slot_id")
    if producer is not None:
        declared = view.get(producer.transform_slot_id)
        if declared is not None:
            if declared.direction is not Direction.OUTPUT:
                out.append(
                    Violation(
                        ERROR,
                        "producer-not-output",
                        eid,
                        "producer_slot_id",
                        "producing execution slot must be bound to an output slot",
                    )
                )
        if producer.dataset_revision_id != eid:
            out.append(
                Violation(
                    ERROR,
                    "producer-backref-mismatch",
                    eid,
                    "producer_slot_id",
                    "producing execution slot does not bind this revision",
                )
            )


def _check_transform_revision(record: TransformRevision, view: StoreView, resolved, out) -> None:
    eid = entity_id(record)
    if record.sequence is None:
        out.append(Violation(ERROR, "missing-sequence", eid, "sequence", "sequence not assigned"))
    elif record.sequence < 1:
        out.append(Violation(ERROR, "invalid-sequence", eid, "sequence", "sequence must be >= 1"))
    elif record.transform_id is not None and view.transform_sequence_taken(
        record.transform_id.value, record.sequence, eid.value
    ):
        out.append(
            Violation(
                ERROR,
                "duplicate-sequence",
                eid,
                "sequence",
                f"sequence {record.sequence} already used within the transform",
            )
        )

    shadowed = set(record.tracing_properties.extensions) & set(NAMED_TRACING_PROPERTIES)
    if shadowed:
        out.append(
            Violation(
                ERROR,
                "reserved-extension-key",
                eid,
                "tracing_properties",
                f"extension keys shadow named properties: {sorted(shadowed)}",
            )
        )


def _check_transform_slot(record: TransformSlot, view: StoreView, resolved, out) -> None:
    eid = entity_id(record)
    _require_name(record, eid, "name", out)
    for sibling_value in view.declared_slot_values(record.transform_revision_id.value):
        if sibling_value == eid.value:
            continue
        sibling = view.get(EntityId(EntityKind.TRANSFORM_SLOT, sibling_value))
        if (
            sibling is not None
            and sibling.name == record.name
            and sibling.direction is record.direction
        ):
            out.append(
                Violation(
                    ERROR,
                    "duplicate-slot",
                    eid,
                    "name",
                    f"slot ({record.name!r}, {record.direction.value}) already declared",
                )
            )
            break


def _check_execution_slot(record: TransformExecutionSlot, view: StoreView, resolved, out) -> None:
    eid = entity_id(record)
    execution = resolved.get("transform_execution_id")
    declared = resolved.get("transform_slot_id")
    revision = resolved.get("dataset_revision_id")

    if execution is not None and declared is not None:
        if declared.transform_revision_id != execution.transform_revision_id:
            out.append(
                Violation(
                    ERROR,
                    "slot-revision-mismatch",
                    eid,
                    "transform_slot_id",
                    "slot belongs to a different transform revision than the execution",
                )
            )

    if revision is not None:
        if revision.dataset_id != record.dataset_id:
            out.append(
                Violation(
                    ERROR,
                    "revision-dataset-mismatch",
                    eid,
                    "dataset_revision_id",
                    "bound revision belongs to a different dataset",
                )
            )
        if declared is not None:
            if declared.direction is Direction.OUTPUT and revision.producer_slot_id != eid:
                out.append(
                    Violation(
                        ERROR,
                        "producer-backref-mismatch",
                        eid,
                        "dataset_revision_id",
                        "output-bound revision does not name this slot as producer",
                    )
                )
            if declared.type_revision_id != revision.type_revision_id:
                out.append(
                    Violation(
                        WARNING,
                        "type-mismatch",
                        eid,
                        "dataset_revision_id",
                        "bound revision's type revision differs from the slot's declared one",
                    )
                )


def _check_flow_execution(record: FlowExecution, view: StoreView, resolved, out) -> None:
    eid = entity_id(record)
    for position, exec_id in enumerate(record.transform_execution_ids):
        field_name = f"transform_execution_ids[{position}]"
        if exec_id.kind is not EntityKind.TRANSFORM_EXECUTION:
            out.append(
                Violation(ERROR, "reference-kind-mismatch", eid, field_name, f"{exec_id} wrong kind")
            )
            continue
        execution = view.get(exec_id)
        if execution is None:
            out.append(
                Violation(ERROR, "unknown-reference", eid, field_name, f"{exec_id} does not resolve")
            )
        elif execution.flow_execution_id != eid:
            out.append(
                Violation(
                    ERROR,
                    "flow-backref-mismatch",
                    eid,
                    field_name,
                    f"{exec_id} does not point back to this flow execution",
                )
            )


def _check_group(record: Group, view: StoreView, resolved, out) -> None:
    eid = entity_id(record)
    for position, item in enumerate(record.items):
        if view.get(item) is None:
            out.append(
                Violation(
                    ERROR, "unknown-reference", eid, f"items[{position}]", f"{item} does not resolve"
                )
            )
    cycle = _group_cycle_from(record, view)
    if cycle:
        out.append(
            Violation(
                ERROR,
                "cyclic-group",
                eid,
                "items",
                "group membership cycle: " + " -> ".join(cycle),
            )
        )


def _group_cycle_from(origin: Group, view: StoreView) -> list[str] | None:
    """DFS over group membership starting at ``origin``; returns a cycle path."""
    origin_value = entity_id(origin).value
    stack: list[str] = []
    on_stack: set[str] = set()
    done: set[str] = set()

    def visit(value: str, group: Group | None) -> list[str] | None:
        if value in on_stack:
            return stack[stack.index(value):] + [value]
        if value in done or group is None:
            return None
        stack.append(value)
        on_stack.add(value)
        try:
            for item in group.items:
                if item.kind is EntityKind.GROUP:
                    member = view.get(item)
                    found = visit(item.value, member)  # type: ignore[arg-type]
                    if found:
                        return found
        finally:
            stack.pop()
            on_stack.remove(value)
            done.add(value)
        return None

    return visit(origin_value, origin)


_KIND_CHECKS = {
    EntityKind.TYPE: _check_type,
    EntityKind.DATASET: _check_dataset,
    EntityKind.TRANSFORM: _check_named,
    EntityKind.FLOW: _check_named,
    EntityKind.IDENTITY: _check_identity,
    EntityKind.DATASET_REVISION: _check_dataset_revision,
    EntityKind.TRANSFORM_REVISION: _check_transform_revision,
    EntityKind.TRANSFORM_SLOT: _check_transform_slot,
    EntityKind.TRANSFORM_EXECUTION_SLOT: _check_execution_slot,
    EntityKind.FLOW_EXECUTION: _check_flow_execution,
    EntityKind.GROUP: _check_group,
}
