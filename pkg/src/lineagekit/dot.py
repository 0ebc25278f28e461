"""Graphviz DOT rendering of trace subgraphs.

Output is deterministic: nodes in sorted id order, then edges in sorted
order, so identical inputs give byte-identical text that can be diffed
or snapshot-tested.
"""

from __future__ import annotations

from .model import EntityId, EntityKind
from .store import Store
from .tracing import BACKWARD, FORWARD, TraceOptions, backward_trace, forward_trace


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(
    store: Store,
    roots: list[EntityId],
    direction: str = FORWARD,
    opts: TraceOptions = TraceOptions(),
) -> str:
    """Render the union of traces from ``roots`` as a directed graph.

    Dataset revisions are ellipses labeled ``dataset:revision``,
    executions are boxes labeled ``transform:revision:execution``;
    executions cut short by property pruning are dashed. Edges always
    point in data-flow direction.
    """
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")
    if not roots:
        return "digraph lineage {}\n"

    trace_fn = forward_trace if direction == FORWARD else backward_trace
    reached: set[EntityId] = set()
    pruned: set[EntityId] = set()
    edges: set[tuple[EntityId, EntityId, str]] = set()
    for root in roots:
        trace = trace_fn(store, root, opts)
        reached.update(trace.reached)
        pruned.update(eid for eid, _ in trace.pruned_at)
        edges.update((edge.source, edge.target, edge.via_slot.value) for edge in trace.edges)

    # Node names default to the bare id value; fall back to
    # kind-qualified names if values collide across the two kinds.
    revisions = sorted(eid.value for eid in reached if eid.kind is EntityKind.DATASET_REVISION)
    executions = sorted(eid.value for eid in reached if eid.kind is EntityKind.TRANSFORM_EXECUTION)
    qualified = bool(set(revisions) & set(executions))

    def node_name(eid: EntityId) -> str:
        return f"{eid.kind.value}/{eid.value}" if qualified else eid.value

    lines = ["digraph lineage {"]
    for eid in sorted(reached, key=lambda e: (e.value, e.kind.value)):
        if eid.kind is EntityKind.DATASET_REVISION:
            rev = store.revision(eid.value)
            label = f"{rev.dataset_id.value}:{eid.value}"
            lines.append(f"  {_quote(node_name(eid))} [label={_quote(label)}, shape=ellipse];")
        else:
            execution = store.execution(eid.value)
            trev = store.transform_revision(execution.transform_revision_id.value)
            label = f"{trev.transform_id.value}:{trev.header.id.value}:{eid.value}"
            style = ", style=dashed" if eid in pruned else ""
            lines.append(
                f"  {_quote(node_name(eid))} [label={_quote(label)}, shape=box{style}];"
            )

    ordered_edges = sorted(
        edges, key=lambda e: (e[0].value, e[0].kind.value, e[1].value, e[1].kind.value, e[2])
    )
    for source, target, _slot in ordered_edges:
        lines.append(f"  {_quote(node_name(source))} -> {_quote(node_name(target))};")
    lines.append("}")
    return "\n".join(lines) + "\n"
