"""Domain entities of the lineage model.

Every tracked object is one of fourteen entity kinds. Records are
immutable value objects; all relations between them are expressed
through :class:`EntityId` references, never object pointers, so a
record is meaningful only together with a store snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from datetime import datetime
from enum import Enum
from typing import ClassVar, NamedTuple, Optional, Union


class EntityKind(str, Enum):
    TYPE = "type"
    TYPE_REVISION = "type_revision"
    DATASET = "dataset"
    DATASET_REVISION = "dataset_revision"
    TRANSFORM = "transform"
    TRANSFORM_REVISION = "transform_revision"
    TRANSFORM_SLOT = "transform_slot"
    TRANSFORM_EXECUTION = "transform_execution"
    TRANSFORM_EXECUTION_SLOT = "transform_execution_slot"
    FLOW = "flow"
    FLOW_REVISION = "flow_revision"
    FLOW_EXECUTION = "flow_execution"
    GROUP = "group"
    IDENTITY = "identity"


class EntityId(NamedTuple):
    """Typed identifier: uniqueness is scoped to the kind."""

    kind: EntityKind
    value: str

    def __str__(self) -> str:
        return f"{self.kind.value}/{self.value}"


class Direction(str, Enum):
    INPUT = "input"
    OUTPUT = "output"


# Declared behavioral flag: True, False, or None for "unknown".
# Unknown is distinct from False; traversal pruning never triggers on it.
TriState = Optional[bool]

NAMED_TRACING_PROPERTIES = ("deterministic", "reversible", "privacy_preserving", "generative")


@dataclass(frozen=True)
class TracingProperties:
    """Declared propagation behavior of a transform revision.

    The four named properties are tri-state; ``extensions`` is an open
    string map for application-defined flags and must not shadow the
    named properties.
    """

    deterministic: TriState = None
    reversible: TriState = None
    privacy_preserving: TriState = None
    generative: TriState = None
    extensions: dict[str, str] = field(default_factory=dict)

    def value_of(self, name: str) -> Union[bool, str, None]:
        if name in NAMED_TRACING_PROPERTIES:
            return getattr(self, name)
        return self.extensions.get(name)


@dataclass(frozen=True)
class EntityHeader:
    """Fields shared by every entity.

    ``termination_sla`` may only be set while ``deprecated`` is true.
    """

    id: EntityId
    deprecated: bool = False
    termination_sla: datetime | None = None


@dataclass(frozen=True)
class TypeDef:
    """Container of type revisions; never holds a format definition itself."""

    KIND: ClassVar[EntityKind] = EntityKind.TYPE
    header: EntityHeader
    external_registry_id: str = ""
    name: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TypeRevision:
    KIND: ClassVar[EntityKind] = EntityKind.TYPE_REVISION
    header: EntityHeader
    type_id: EntityId
    external_type_id: str = ""
    backwards_compatible: bool = False
    version: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    """Container for the iterations of one logical data blob."""

    KIND: ClassVar[EntityKind] = EntityKind.DATASET
    header: EntityHeader
    type_id: EntityId
    external_provider_id: str = ""
    external_repo_id: str = ""
    name: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetRevision:
    """Immutable point-in-time iteration of a dataset.

    A revision was either produced by a transform execution
    (``producer_slot_id`` set) or imported from outside the tracked
    boundary (``external_source_id`` set) -- exactly one of the two.
    ``sequence`` is the store-assigned commit ordinal within the
    dataset. After commit only the header's deprecation fields may
    change.
    """

    KIND: ClassVar[EntityKind] = EntityKind.DATASET_REVISION
    header: EntityHeader
    dataset_id: EntityId
    type_revision_id: EntityId
    producer_slot_id: EntityId | None = None
    external_source_id: str | None = None
    external_blob_id: str = ""
    sequence: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Transform:
    """Unit of versioned application logic."""

    KIND: ClassVar[EntityKind] = EntityKind.TRANSFORM
    header: EntityHeader
    external_provider_id: str = ""
    external_repo_id: str = ""
    name: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransformRevision:
    """Commit-equivalent version of a transform; carries tracing properties."""

    KIND: ClassVar[EntityKind] = EntityKind.TRANSFORM_REVISION
    header: EntityHeader
    transform_id: EntityId
    external_commit_id: str = ""
    tracing_properties: TracingProperties = field(default_factory=TracingProperties)
    comment: str = ""
    sequence: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransformSlot:
    """Typed input/output port declared on a transform revision.

    Slots never reference a dataset; concrete revisions are bound only
    at execution time through execution slots.
    """

    KIND: ClassVar[EntityKind] = EntityKind.TRANSFORM_SLOT
    header: EntityHeader
    transform_revision_id: EntityId
    type_revision_id: EntityId
    name: str
    direction: Direction
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransformExecution:
    KIND: ClassVar[EntityKind] = EntityKind.TRANSFORM_EXECUTION
    header: EntityHeader
    transform_revision_id: EntityId
    flow_execution_id: EntityId | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransformExecutionSlot:
    """Runtime binding of a declared slot to a concrete dataset revision."""

    KIND: ClassVar[EntityKind] = EntityKind.TRANSFORM_EXECUTION_SLOT
    header: EntityHeader
    transform_execution_id: EntityId
    transform_slot_id: EntityId
    dataset_id: EntityId
    dataset_revision_id: EntityId
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Flow:
    KIND: ClassVar[EntityKind] = EntityKind.FLOW
    header: EntityHeader
    external_provider_id: str = ""
    external_flow_id: str = ""
    name: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FlowRevision:
    # definition is stored but never interpreted.
    KIND: ClassVar[EntityKind] = EntityKind.FLOW_REVISION
    header: EntityHeader
    flow_id: EntityId
    external_revision_id: str = ""
    definition: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FlowExecution:
    # execution_log is stored but never interpreted.
    KIND: ClassVar[EntityKind] = EntityKind.FLOW_EXECUTION
    header: EntityHeader
    flow_revision_id: EntityId
    execution_log: str = ""
    transform_execution_ids: tuple[EntityId, ...] = ()
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Group:
    """Ordered, possibly nested, acyclic collection of entities."""

    KIND: ClassVar[EntityKind] = EntityKind.GROUP
    header: EntityHeader
    items: tuple[EntityId, ...] = ()
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Identity:
    """Actor recorded with each transaction; never verified."""

    KIND: ClassVar[EntityKind] = EntityKind.IDENTITY
    header: EntityHeader
    external_provider_id: str = ""
    external_actor_id: str = ""
    attributes: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


EntityRecord = Union[
    TypeDef,
    TypeRevision,
    Dataset,
    DatasetRevision,
    Transform,
    TransformRevision,
    TransformSlot,
    TransformExecution,
    TransformExecutionSlot,
    Flow,
    FlowRevision,
    FlowExecution,
    Group,
    Identity,
]

KIND_TO_CLASS: dict[EntityKind, type] = {
    cls.KIND: cls
    for cls in (
        TypeDef,
        TypeRevision,
        Dataset,
        DatasetRevision,
        Transform,
        TransformRevision,
        TransformSlot,
        TransformExecution,
        TransformExecutionSlot,
        Flow,
        FlowRevision,
        FlowExecution,
        Group,
        Identity,
    )
}

# Scalar EntityId reference fields per kind: (attribute, expected kind, optional).
REFERENCE_FIELDS: dict[EntityKind, tuple[tuple[str, EntityKind, bool], ...]] = {
    EntityKind.TYPE: (),
    EntityKind.TYPE_REVISION: (("type_id", EntityKind.TYPE, False),),
    EntityKind.DATASET: (("type_id", EntityKind.TYPE, False),),
    EntityKind.DATASET_REVISION: (
        ("dataset_id", EntityKind.DATASET, False),
        ("type_revision_id", EntityKind.TYPE_REVISION, False),
        ("producer_slot_id", EntityKind.TRANSFORM_EXECUTION_SLOT, True),
    ),
    EntityKind.TRANSFORM: (),
    EntityKind.TRANSFORM_REVISION: (("transform_id", EntityKind.TRANSFORM, False),),
    EntityKind.TRANSFORM_SLOT: (
        ("transform_revision_id", EntityKind.TRANSFORM_REVISION, False),
        ("type_revision_id", EntityKind.TYPE_REVISION, False),
    ),
    EntityKind.TRANSFORM_EXECUTION: (
        ("transform_revision_id", EntityKind.TRANSFORM_REVISION, False),
        ("flow_execution_id", EntityKind.FLOW_EXECUTION, True),
    ),
    EntityKind.TRANSFORM_EXECUTION_SLOT: (
        ("transform_execution_id", EntityKind.TRANSFORM_EXECUTION, False),
        ("transform_slot_id", EntityKind.TRANSFORM_SLOT, False),
        ("dataset_id", EntityKind.DATASET, False),
        ("dataset_revision_id", EntityKind.DATASET_REVISION, False),
    ),
    EntityKind.FLOW: (),
    EntityKind.FLOW_REVISION: (("flow_id", EntityKind.FLOW, False),),
    EntityKind.FLOW_EXECUTION: (("flow_revision_id", EntityKind.FLOW_REVISION, False),),
    EntityKind.GROUP: (),
    EntityKind.IDENTITY: (),
}

# Kinds whose committed records are append-only: modification
# transactions may touch nothing but header deprecation fields.
HEADER_ONLY_MODIFIABLE = frozenset(
    {
        EntityKind.DATASET_REVISION,
        EntityKind.TRANSFORM_EXECUTION,
        EntityKind.TRANSFORM_EXECUTION_SLOT,
        EntityKind.FLOW_EXECUTION,
    }
)

# Store-assigned / structural fields that stay frozen even on kinds
# that otherwise accept modifications (protects index derivability).
PINNED_FIELDS: dict[EntityKind, tuple[str, ...]] = {
    EntityKind.TRANSFORM_REVISION: ("transform_id", "sequence"),
}


def entity_id(record: EntityRecord) -> EntityId:
    return record.header.id


def entity_kind(record: EntityRecord) -> EntityKind:
    return record.KIND


def non_header_fields(record: EntityRecord) -> list[str]:
    return [f.name for f in fields(record) if f.name != "header"]


def changed_non_header_fields(old: EntityRecord, new: EntityRecord) -> list[str]:
    """Names of non-header fields whose values differ between two images."""
    return [name for name in non_header_fields(old) if getattr(old, name) != getattr(new, name)]
