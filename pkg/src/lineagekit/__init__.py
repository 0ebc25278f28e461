"""Embeddable data-lineage tracking engine.

Record datasets, transforms, and their executions as an event-sourced
transaction log; answer forward/backward lineage questions, enumerate
routes between revisions, and reconstruct any historical store state.
"""

from .changelog import (
    ChangeLog,
    ChangeSet,
    CommitResult,
    Transaction,
    TransactionDraft,
    replay,
)
from .errors import (
    EmptyDataset,
    EntityNotFound,
    IndexOutOfRange,
    LineageError,
    LogLocked,
    MalformedLine,
    NonMonotoneSeq,
    OutOfRange,
    RefSyntaxError,
    ReplayDiverged,
    RevisionNotInDataset,
    UnknownKind,
    UnsupportedKind,
)
from .model import (
    Dataset,
    DatasetRevision,
    Direction,
    EntityHeader,
    EntityId,
    EntityKind,
    EntityRecord,
    Flow,
    FlowExecution,
    FlowRevision,
    Group,
    Identity,
    TracingProperties,
    Transform,
    TransformExecution,
    TransformExecutionSlot,
    TransformRevision,
    TransformSlot,
    TypeDef,
    TypeRevision,
)
from .query import (
    DeprecationReport,
    RevisionSelector,
    deprecation_report,
    group_members,
    resolve_revision,
)
from .refs import (
    EntityRef,
    ExecutionRef,
    IdRef,
    RelativeRevisionRef,
    RevisionRef,
    RouteRef,
    format_entity_ref,
    parse_entity_ref,
)
from .store import Store, build_store
from .tracing import (
    Closure,
    LineageEdge,
    LineageRoute,
    PrunePredicate,
    RouteEnumeration,
    TraceOptions,
    TraceResult,
    ancestors,
    backward_trace,
    environment_closure,
    forward_trace,
    impacted_leaves,
    lineage_route,
)
from .validation import ValidationReport, Violation, validate_entity

__all__ = [
    "ChangeLog",
    "ChangeSet",
    "Closure",
    "CommitResult",
    "Dataset",
    "DatasetRevision",
    "DeprecationReport",
    "Direction",
    "EmptyDataset",
    "EntityHeader",
    "EntityId",
    "EntityKind",
    "EntityNotFound",
    "EntityRecord",
    "EntityRef",
    "ExecutionRef",
    "Flow",
    "FlowExecution",
    "FlowRevision",
    "Group",
    "IdRef",
    "Identity",
    "IndexOutOfRange",
    "LineageEdge",
    "LineageError",
    "LineageRoute",
    "LogLocked",
    "MalformedLine",
    "NonMonotoneSeq",
    "OutOfRange",
    "PrunePredicate",
    "RefSyntaxError",
    "RelativeRevisionRef",
    "ReplayDiverged",
    "RevisionNotInDataset",
    "RevisionRef",
    "RevisionSelector",
    "RouteEnumeration",
    "RouteRef",
    "Store",
    "TraceOptions",
    "TraceResult",
    "TracingProperties",
    "Transaction",
    "TransactionDraft",
    "Transform",
    "TransformExecution",
    "TransformExecutionSlot",
    "TransformRevision",
    "TransformSlot",
    "TypeDef",
    "TypeRevision",
    "UnknownKind",
    "UnsupportedKind",
    "ValidationReport",
    "Violation",
    "ancestors",
    "backward_trace",
    "build_store",
    "deprecation_report",
    "environment_closure",
    "format_entity_ref",
    "forward_trace",
    "group_members",
    "impacted_leaves",
    "lineage_route",
    "parse_entity_ref",
    "replay",
    "resolve_revision",
    "validate_entity",
]
