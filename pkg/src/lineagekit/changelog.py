"""Event-sourced change mechanism.

All model evolution happens through identity-stamped transactions.
``commit`` validates a draft atomically: either every invariant of the
resulting store holds and the transaction is appended, or nothing
changes and the report is returned. The ordered transaction list is the
single source of truth; any store snapshot is reproducible by replay.

Single-writer contract: ``ChangeLog`` serializes commits internally;
snapshots handed out are immutable and stay valid while further commits
proceed.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

from .errors import OutOfRange, ReplayDiverged
from .ids import generate_id_value
from .model import (
    HEADER_ONLY_MODIFIABLE,
    PINNED_FIELDS,
    DatasetRevision,
    Direction,
    EntityId,
    EntityKind,
    EntityRecord,
    TransformRevision,
    changed_non_header_fields,
    entity_id,
)
from .store import Store, build_indexes
from .validation import ERROR, ValidationReport, validate_record

_REVISION_KINDS = (EntityKind.DATASET_REVISION, EntityKind.TRANSFORM_REVISION)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class Transaction:
    """Atomic, identity-stamped batch of model changes, as recorded."""

    seq: int
    identity_id: EntityId
    timestamp: datetime
    additions: tuple[EntityRecord, ...] = ()
    modifications: tuple[EntityRecord, ...] = ()
    removals: tuple[EntityId, ...] = ()
    comment: str | None = None


@dataclass
class TransactionDraft:
    """Commit input: like a transaction but without store-assigned parts.

    Additions may carry blank id values (``""``) to request
    store-assigned identifiers, and revisions may leave ``sequence``
    unset. Entities that other draft entities reference must be given
    explicit ids by the committer.
    """

    identity_id: EntityId | None = None
    additions: list[EntityRecord] = field(default_factory=list)
    modifications: list[EntityRecord] = field(default_factory=list)
    removals: list[EntityId] = field(default_factory=list)
    comment: str | None = None
    timestamp: datetime | None = None


@dataclass(frozen=True)
class CommitResult:
    seq: int | None
    report: ValidationReport
    transaction: Transaction | None = None

    @property
    def ok(self) -> bool:
        return self.seq is not None


@dataclass(frozen=True)
class ChangeSet:
    added: tuple[EntityId, ...] = ()
    modified: tuple[EntityId, ...] = ()
    removed: tuple[EntityId, ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.added or self.modified or self.removed)


class ChangeLog:
    """Ordered transaction log plus the live store it folds up to."""

    def __init__(self) -> None:
        self._transactions: list[Transaction] = []
        self._store = Store()
        self._used_ids: dict[EntityKind, set[str]] = {kind: set() for kind in EntityKind}
        self._write_lock = threading.Lock()

    @property
    def store(self) -> Store:
        return self._store

    @property
    def transactions(self) -> tuple[Transaction, ...]:
        return tuple(self._transactions)

    @property
    def last_seq(self) -> int:
        return self._store.last_seq

    # -- writing -----------------------------------------------------------

    def commit(self, draft: TransactionDraft) -> CommitResult:
        """Validate and append one transaction.

        On success returns the assigned seq, the warning-only report,
        and the concrete transaction (useful for discovering assigned
        ids). On any validation error the log and live store are
        untouched and the full report is returned with ``seq=None``.
        """
        with self._write_lock:
            report = ValidationReport()
            txn = self._resolve_draft(draft, report)
            if txn is None or not report.ok:
                return CommitResult(None, report)
            new_store = _apply(self._store, self._used_ids, txn, report)
            if new_store is None:
                return CommitResult(None, report)
            self._absorb(txn, new_store)
            return CommitResult(txn.seq, report, txn)

    def _absorb(self, txn: Transaction, new_store: Store) -> None:
        self._transactions.append(txn)
        self._store = new_store
        for record in txn.additions:
            eid = entity_id(record)
            self._used_ids[eid.kind].add(eid.value)

    def _resolve_draft(self, draft: TransactionDraft, report: ValidationReport) -> Transaction | None:
        if draft.identity_id is None:
            report.add(ERROR, "missing-identity", None, "identity_id", "transaction needs an identity")
            return None
        timestamp = draft.timestamp or utc_now()
        if timestamp.tzinfo is None:
            report.add(ERROR, "invalid-timestamp", None, "timestamp", "timestamp must be timezone-aware")
            return None
        timestamp = timestamp.astimezone(timezone.utc)

        additions = self._assign_ids(list(draft.additions))
        additions = self._assign_sequences(additions)
        return Transaction(
            seq=self._store.last_seq + 1,
            identity_id=draft.identity_id,
            timestamp=timestamp,
            additions=tuple(additions),
            modifications=tuple(draft.modifications),
            removals=tuple(draft.removals),
            comment=draft.comment,
        )

    def _assign_ids(self, additions: list[EntityRecord]) -> list[EntityRecord]:
        taken = {eid.value for record in additions for eid in [entity_id(record)] if eid.value}
        out: list[EntityRecord] = []
        for record in additions:
            eid = entity_id(record)
            if eid.value == "":
                value = generate_id_value()
                while value in self._used_ids[eid.kind] or value in taken:
                    value = generate_id_value()
                taken.add(value)
                record = replace(
                    record, header=replace(record.header, id=EntityId(eid.kind, value))
                )
            out.append(record)
        return out

    def _assign_sequences(self, additions: list[EntityRecord]) -> list[EntityRecord]:
        counters: dict[tuple[EntityKind, str], int] = {}

        def next_for(kind: EntityKind, container: str, index: dict[str, tuple[str, ...]]) -> int:
            key = (kind, container)
            if key not in counters:
                existing = index.get(container, ())
                top = 0
                if existing:
                    last = self._store.entities[kind][existing[-1]]
                    top = last.sequence or 0
                counters[key] = top
            counters[key] += 1
            return counters[key]

        def note_supplied(kind: EntityKind, container: str, value: int, index) -> None:
            key = (kind, container)
            if key not in counters:
                next_for(kind, container, index)
                counters[key] -= 1
            counters[key] = max(counters[key], value)

        out: list[EntityRecord] = []
        for record in additions:
            if isinstance(record, DatasetRevision):
                index = self._store.revisions_by_dataset
                container = record.dataset_id.value if record.dataset_id else ""
                if record.sequence is None:
                    record = replace(
                        record,
                        sequence=next_for(EntityKind.DATASET_REVISION, container, index),
                    )
                else:
                    note_supplied(EntityKind.DATASET_REVISION, container, record.sequence, index)
            elif isinstance(record, TransformRevision):
                index = self._store.revisions_by_transform
                container = record.transform_id.value if record.transform_id else ""
                if record.sequence is None:
                    record = replace(
                        record,
                        sequence=next_for(EntityKind.TRANSFORM_REVISION, container, index),
                    )
                else:
                    note_supplied(EntityKind.TRANSFORM_REVISION, container, record.sequence, index)
            out.append(record)
        return out

    # -- reading -----------------------------------------------------------

    def snapshot_at(self, seq: int) -> Store:
        """Store state immediately after transaction ``seq`` (0 = empty)."""
        if seq < 0 or seq > self._store.last_seq:
            raise OutOfRange(seq, self._store.last_seq)
        return replay(self._transactions[:seq])

    def diff(self, seq_a: int, seq_b: int) -> ChangeSet:
        """Entity ids whose live state differs between two snapshots."""
        if seq_a > seq_b:
            raise OutOfRange(seq_a, seq_b)
        before = self.snapshot_at(seq_a)
        after = self.snapshot_at(seq_b)
        added: list[EntityId] = []
        modified: list[EntityId] = []
        removed: list[EntityId] = []
        for kind in EntityKind:
            old = before.entities[kind]
            new = after.entities[kind]
            for value, record in new.items():
                if value not in old:
                    added.append(EntityId(kind, value))
                elif old[value] != record:
                    modified.append(EntityId(kind, value))
            for value in old:
                if value not in new:
                    removed.append(EntityId(kind, value))
        key = lambda eid: (eid.kind.value, eid.value)
        return ChangeSet(
            added=tuple(sorted(added, key=key)),
            modified=tuple(sorted(modified, key=key)),
            removed=tuple(sorted(removed, key=key)),
        )

    # -- reconstruction ------------------------------------------------------

    @classmethod
    def from_transactions(cls, transactions: list[Transaction]) -> "ChangeLog":
        """Rebuild a log by replaying recorded transactions in order.

        Raises :class:`ReplayDiverged` if any transaction fails
        validation or the seq numbering is not contiguous from 1.
        """
        log = cls()
        for txn in transactions:
            report = ValidationReport()
            if txn.seq != log._store.last_seq + 1:
                report.add(
                    ERROR,
                    "non-contiguous-seq",
                    None,
                    "seq",
                    f"expected seq {log._store.last_seq + 1}, found {txn.seq}",
                )
                raise ReplayDiverged(txn.seq, report)
            new_store = _apply(log._store, log._used_ids, txn, report)
            if new_store is None:
                raise ReplayDiverged(txn.seq, report)
            log._absorb(txn, new_store)
        return log


def replay(transactions) -> Store:
    """Fold transactions from an empty store; deterministic."""
    return ChangeLog.from_transactions(list(transactions)).store


# ---------------------------------------------------------------------------
# transaction application


def _apply(
    store: Store,
    used_ids: dict[EntityKind, set[str]],
    txn: Transaction,
    report: ValidationReport,
) -> Store | None:
    """Validate ``txn`` against ``store`` and produce the successor store.

    Returns None (and a populated report) if any rule fails; the input
    store is never mutated either way.
    """
    _check_transaction_shape(store, used_ids, txn, report)
    if not report.ok:
        return None

    full_scan = _needs_full_scan(store, txn)
    candidate = _build_candidate(store, txn, full_scan)

    if full_scan:
        to_validate = list(candidate.iter_all())
    else:
        to_validate = list(txn.additions) + list(txn.modifications)
    for record in to_validate:
        report.extend(validate_record(record, candidate))

    new_exec_values = [
        entity_id(r).value for r in txn.additions if r.KIND is EntityKind.TRANSFORM_EXECUTION
    ]
    added_exec_slots = any(
        r.KIND is EntityKind.TRANSFORM_EXECUTION_SLOT for r in txn.additions
    )
    if report.ok and added_exec_slots:
        if full_scan:
            cyclic = find_lineage_cycle(candidate) is not None
        else:
            cyclic = _cycle_through(candidate, new_exec_values)
        if cyclic:
            report.add(
                ERROR,
                "lineage-cycle",
                None,
                None,
                "transaction would make the revision/execution graph cyclic",
            )

    if not report.ok:
        return None
    return candidate


def _check_transaction_shape(
    store: Store,
    used_ids: dict[EntityKind, set[str]],
    txn: Transaction,
    report: ValidationReport,
) -> None:
    addition_ids = [entity_id(r) for r in txn.additions]
    modification_ids = [entity_id(r) for r in txn.modifications]

    seen: set[EntityId] = set()
    for eid in addition_ids:
        if eid in seen:
            report.add(ERROR, "duplicate-id", eid, None, "added twice in one transaction")
        seen.add(eid)
        if eid.value and eid.value in used_ids[eid.kind]:
            report.add(
                ERROR,
                "duplicate-id",
                eid,
                None,
                "id already used by a current or previously removed entity",
            )

    for bucket_name, bucket in (("modifications", modification_ids), ("removals", list(txn.removals))):
        bucket_seen: set[EntityId] = set()
        for eid in bucket:
            if eid in bucket_seen:
                report.add(ERROR, "duplicate-entry", eid, bucket_name, "listed twice")
            bucket_seen.add(eid)
            if not store.has(eid):
                report.add(ERROR, "unknown-reference", eid, bucket_name, "no live entity with this id")

    groups = (set(addition_ids), set(modification_ids), set(txn.removals))
    names = ("additions", "modifications", "removals")
    for i in range(3):
        for j in range(i + 1, 3):
            for eid in groups[i] & groups[j]:
                report.add(
                    ERROR,
                    "overlapping-id-sets",
                    eid,
                    None,
                    f"appears in both {names[i]} and {names[j]}",
                )

    identity = txn.identity_id
    if identity.kind is not EntityKind.IDENTITY:
        report.add(ERROR, "reference-kind-mismatch", identity, "identity_id", "not an identity id")
    elif not store.has(identity) and identity not in set(addition_ids):
        report.add(ERROR, "unknown-reference", identity, "identity_id", "identity does not resolve")

    for image in txn.modifications:
        old = store.get(entity_id(image))
        if old is None:
            continue  # reported above
        changed = changed_non_header_fields(old, image)
        if image.KIND in HEADER_ONLY_MODIFIABLE:
            for field_name in changed:
                report.add(
                    ERROR,
                    "immutable-field-modified",
                    entity_id(image),
                    field_name,
                    f"{image.KIND.value} records are append-only; only header fields may change",
                )
        else:
            for field_name in PINNED_FIELDS.get(image.KIND, ()):
                if field_name in changed:
                    report.add(
                        ERROR,
                        "immutable-field-modified",
                        entity_id(image),
                        field_name,
                        "store-assigned field cannot be modified",
                    )

    # Execution slots are sealed to the transaction that records their
    # execution; late bindings would allow references into the future.
    new_executions = {
        eid for eid in addition_ids if eid.kind is EntityKind.TRANSFORM_EXECUTION
    }
    for record in txn.additions:
        if record.KIND is EntityKind.TRANSFORM_EXECUTION_SLOT:
            if record.transform_execution_id not in new_executions:
                report.add(
                    ERROR,
                    "execution-sealed",
                    entity_id(record),
                    "transform_execution_id",
                    "execution slots must be committed together with their execution",
                )


def _needs_full_scan(store: Store, txn: Transaction) -> bool:
    if txn.removals:
        return True
    for image in txn.modifications:
        old = store.get(entity_id(image))
        if old is not None and changed_non_header_fields(old, image):
            return True
    return False


def _build_candidate(store: Store, txn: Transaction, full_scan: bool) -> Store:
    entities: dict[EntityKind, dict[str, EntityRecord]] = dict(store.entities)
    touched: set[EntityKind] = set()

    def bucket(kind: EntityKind) -> dict[str, EntityRecord]:
        if kind not in touched:
            entities[kind] = dict(entities[kind])
            touched.add(kind)
        return entities[kind]

    for eid in txn.removals:
        bucket(eid.kind).pop(eid.value, None)
    for record in txn.modifications:
        bucket(record.KIND)[entity_id(record).value] = record
    for record in txn.additions:
        bucket(record.KIND)[entity_id(record).value] = record

    if full_scan:
        by_ds, by_tr, consumers, slots, declared = build_indexes(entities)
    else:
        by_ds = _merge_sequence_index(
            store.revisions_by_dataset,
            entities[EntityKind.DATASET_REVISION],
            [r for r in txn.additions if isinstance(r, DatasetRevision)],
            lambda r: r.dataset_id.value,
        )
        by_tr = _merge_sequence_index(
            store.revisions_by_transform,
            entities[EntityKind.TRANSFORM_REVISION],
            [r for r in txn.additions if isinstance(r, TransformRevision)],
            lambda r: r.transform_id.value,
        )
        consumers, slots = _merge_execution_indexes(store, entities, txn)
        declared = _merge_sorted_index(
            store.slots_by_transform_revision,
            [
                (r.transform_revision_id.value, entity_id(r).value)
                for r in txn.additions
                if r.KIND is EntityKind.TRANSFORM_SLOT
            ],
        )

    return Store(
        entities=entities,
        revisions_by_dataset=by_ds,
        revisions_by_transform=by_tr,
        consumers_by_revision=consumers,
        slots_by_execution=slots,
        slots_by_transform_revision=declared,
        last_seq=txn.seq,
    )


def _merge_sequence_index(
    base: dict[str, tuple[str, ...]],
    records: dict[str, EntityRecord],
    additions: list,
    container_of,
) -> dict[str, tuple[str, ...]]:
    if not additions:
        return base
    merged = dict(base)
    grouped: dict[str, list] = {}
    for record in additions:
        grouped.setdefault(container_of(record), []).append(record)
    for container, new_records in grouped.items():
        pairs = [
            (records[value].sequence or 0, value) for value in merged.get(container, ())
        ]
        pairs.extend((r.sequence or 0, entity_id(r).value) for r in new_records)
        pairs.sort()
        merged[container] = tuple(value for _, value in pairs)
    return merged


def _merge_sorted_index(
    base: dict[str, tuple[str, ...]], pairs: list[tuple[str, str]]
) -> dict[str, tuple[str, ...]]:
    if not pairs:
        return base
    merged = dict(base)
    grouped: dict[str, list[str]] = {}
    for container, value in pairs:
        grouped.setdefault(container, []).append(value)
    for container, values in grouped.items():
        merged[container] = tuple(sorted(list(merged.get(container, ())) + values))
    return merged


def _merge_execution_indexes(
    store: Store,
    entities: dict[EntityKind, dict[str, EntityRecord]],
    txn: Transaction,
) -> tuple[dict[str, tuple[str, ...]], dict[str, tuple[str, ...]]]:
    consumer_pairs: list[tuple[str, str]] = []
    slot_pairs: list[tuple[str, str]] = []
    transform_slots = entities[EntityKind.TRANSFORM_SLOT]
    for record in txn.additions:
        if record.KIND is not EntityKind.TRANSFORM_EXECUTION_SLOT:
            continue
        value = entity_id(record).value
        slot_pairs.append((record.transform_execution_id.value, value))
        declared = transform_slots.get(record.transform_slot_id.value)
        if declared is not None and declared.direction is Direction.INPUT:
            consumer_pairs.append((record.dataset_revision_id.value, value))
    consumers = _merge_sorted_index(store.consumers_by_revision, consumer_pairs)
    slots = _merge_sorted_index(store.slots_by_execution, slot_pairs)
    return consumers, slots


# ---------------------------------------------------------------------------
# acyclicity of the revision/execution graph

_REV = 0
_EXEC = 1


def _successors(store: Store, node: tuple[int, str]) -> list[tuple[int, str]]:
    tag, value = node
    if tag == _REV:
        return [
            (_EXEC, store.execution_slot(slot).transform_execution_id.value)
            for slot in store.consuming_slots(value)
        ]
    return [(_REV, rev) for _, rev in store.execution_outputs(value)]


def _cycle_through(store: Store, start_exec_values: list[str]) -> bool:
    """Cycle detection restricted to paths through the given executions.

    Sound for incremental commits because committed lineage edges are
    immutable: any fresh cycle must pass through a newly added
    execution.
    """
    grey: set[tuple[int, str]] = set()
    black: set[tuple[int, str]] = set()
    for start_value in start_exec_values:
        start = (_EXEC, start_value)
        if start in black:
            continue
        stack: list[tuple[tuple[int, str], int]] = [(start, 0)]
        grey.add(start)
        while stack:
            node, cursor = stack[-1]
            succ = _successors(store, node)
            if cursor < len(succ):
                stack[-1] = (node, cursor + 1)
                child = succ[cursor]
                if child in grey:
                    return True
                if child not in black:
                    grey.add(child)
                    stack.append((child, 0))
            else:
                stack.pop()
                grey.discard(node)
                black.add(node)
    return False


def find_lineage_cycle(store: Store) -> list[str] | None:
    """Full Kahn topological check; returns ids stuck on a cycle, or None."""
    indegree: dict[tuple[int, str], int] = {}
    for value in store.entities[EntityKind.DATASET_REVISION]:
        indegree[(_REV, value)] = 0
    for value in store.entities[EntityKind.TRANSFORM_EXECUTION]:
        indegree[(_EXEC, value)] = 0
    for node in list(indegree):
        for child in _successors(store, node):
            indegree[child] = indegree.get(child, 0) + 1

    frontier = [node for node, degree in indegree.items() if degree == 0]
    seen = 0
    while frontier:
        node = frontier.pop()
        seen += 1
        for child in _successors(store, node):
            indegree[child] -= 1
            if indegree[child] == 0:
                frontier.append(child)
    if seen == len(indegree):
        return None
    return sorted(value for (_, value), degree in indegree.items() if degree > 0)
