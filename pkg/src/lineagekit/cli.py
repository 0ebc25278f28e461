"""Operator command line.

Every query subcommand is read-only over the log file; only ``init``
and ``commit`` write, guarded by an advisory file lock. Exit codes:
0 success, 1 validation/query/IO error (structured JSON on stderr under
``--format json``), 2 usage error.
"""

from __future__ import annotations

import fcntl
import json
from dataclasses import dataclass
from pathlib import Path

import click

from . import dot as dot_module
from .changelog import ChangeLog, ChangeSet, TransactionDraft
from .errors import EntityNotFound, LineageError, LogLocked
from .ids import generate_id_value
from .interchange import (
    canonical_json,
    encode_entity,
    read_draft,
    read_log,
    write_log,
)
from .model import EntityHeader, EntityId, EntityKind, Identity
from .query import RevisionSelector, deprecation_report, resolve_revision
from .refs import (
    ExecutionRef,
    IdRef,
    RelativeRevisionRef,
    RevisionRef,
    RouteRef,
    format_entity_ref,
    parse_entity_ref,
)
from .store import Store, build_indexes
from .tracing import (
    PrunePredicate,
    TraceOptions,
    TraceResult,
    ancestors,
    backward_trace,
    environment_closure,
    forward_trace,
    impacted_leaves,
    lineage_route,
)
from .validation import ValidationReport, Violation, validate_record


@dataclass
class CliConfig:
    log_path: Path | None
    fmt: str
    identity: str | None
    actor: str | None


class CliFailure(LineageError):
    """Operational CLI error (I/O, ambiguity, bad state)."""


pass_config = click.make_pass_decorator(CliConfig)


@click.group()
@click.option(
    "--log",
    "log_path",
    envvar="LINEAGE_LOG",
    type=click.Path(path_type=Path),
    default=None,
    help="Path of the transaction log file (env: LINEAGE_LOG).",
)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["text", "json", "dot"]),
    default="text",
    show_default=True,
    help="Output format.",
)
@click.option("--identity", default=None, help="Identity entity id to stamp commits with.")
@click.option(
    "--actor",
    default=None,
    help="Inline identity as provider:actor; records a new identity entity.",
)
@click.pass_context
def cli(ctx: click.Context, log_path: Path | None, fmt: str, identity: str | None, actor: str | None):
    """Data lineage tracking: append transactions, query the graph."""
    ctx.obj = CliConfig(log_path=log_path, fmt=fmt, identity=identity, actor=actor)


def main() -> None:
    cli()


# ---------------------------------------------------------------------------
# plumbing


def _emit(cfg: CliConfig, payload: dict, text: str) -> None:
    if cfg.fmt == "json":
        click.echo(canonical_json(payload))
    else:
        click.echo(text)


def _abort(cfg: CliConfig, payload: dict, text: str) -> "SystemExit":
    click.echo(canonical_json(payload) if cfg.fmt == "json" else text, err=True)
    return SystemExit(1)


def _fail(cfg: CliConfig, error: LineageError) -> SystemExit:
    return _abort(
        cfg,
        {"error": {"type": type(error).__name__, "message": str(error)}},
        f"error: {error}",
    )


def _fail_report(cfg: CliConfig, report: ValidationReport) -> SystemExit:
    return _abort(
        cfg,
        _report_payload(report),
        "commit rejected:\n" + "\n".join(f"  {v}" for v in report.violations),
    )


def _violation_payload(violation: Violation) -> dict:
    return {
        "severity": violation.severity,
        "rule": violation.rule,
        "entity": (
            {"kind": violation.entity_id.kind.value, "id": violation.entity_id.value}
            if violation.entity_id
            else None
        ),
        "field": violation.field,
        "message": violation.message,
    }


def _report_payload(report: ValidationReport) -> dict:
    return {
        "errors": [_violation_payload(v) for v in report.errors],
        "warnings": [_violation_payload(v) for v in report.warnings],
    }


def _require_log_path(cfg: CliConfig) -> Path:
    if cfg.log_path is None:
        raise click.UsageError("a log file is required: pass --log or set LINEAGE_LOG")
    return cfg.log_path


def _load_log(cfg: CliConfig) -> ChangeLog:
    path = _require_log_path(cfg)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CliFailure(f"cannot read log {path}: {exc}") from None
    return ChangeLog.from_transactions(read_log(data))


class _LogFileLock:
    """Advisory lock serializing writers of one log file."""

    def __init__(self, path: Path):
        self._lock_path = path.with_name(path.name + ".lock")
        self._handle = None

    def __enter__(self):
        handle = open(self._lock_path, "w")
        try:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            handle.close()
            raise LogLocked(str(self._lock_path)) from None
        self._handle = handle
        return self

    def __exit__(self, *exc_info):
        if self._handle is not None:
            fcntl.flock(self._handle.fileno(), fcntl.LOCK_UN)
            self._handle.close()
            self._handle = None
        return False


def _eid_payload(eid: EntityId) -> dict:
    return {"kind": eid.kind.value, "id": eid.value}


def _display_ref(store: Store, eid: EntityId) -> str:
    if eid.kind is EntityKind.DATASET_REVISION and store.has(eid):
        return f"{store.revision(eid.value).dataset_id.value}:{eid.value}"
    if eid.kind is EntityKind.TRANSFORM_EXECUTION and store.has(eid):
        execution = store.execution(eid.value)
        trev = store.transform_revision(execution.transform_revision_id.value)
        return f"{trev.transform_id.value}:{trev.header.id.value}:{eid.value}"
    return eid.value


def _revision_from_ref(store: Store, text: str) -> EntityId:
    ref = parse_entity_ref(text.strip())
    if isinstance(ref, IdRef):
        eid = EntityId(EntityKind.DATASET_REVISION, ref.value)
        if not store.has(eid):
            raise EntityNotFound(EntityKind.DATASET_REVISION.value, ref.value)
        return eid
    if isinstance(ref, RevisionRef):
        dataset = EntityId(EntityKind.DATASET, ref.dataset)
        return resolve_revision(
            store,
            RevisionSelector.by_id(dataset, EntityId(EntityKind.DATASET_REVISION, ref.revision)),
        )
    if isinstance(ref, RelativeRevisionRef):
        dataset = EntityId(EntityKind.DATASET, ref.dataset)
        if ref.earliest:
            selector = RevisionSelector.earliest(dataset)
        else:
            selector = RevisionSelector.head_minus(dataset, ref.head_offset)
        return resolve_revision(store, selector)
    raise CliFailure(f"{text!r} does not name a dataset revision")


def _parse_prune(values: tuple[str, ...]) -> tuple[PrunePredicate, ...]:
    predicates = []
    for item in values:
        name, sep, raw = item.partition("=")
        if not sep or not name or not raw:
            raise click.UsageError(f"--prune takes property=value, got {item!r}")
        value: bool | str
        if raw in ("true", "false"):
            value = raw == "true"
        else:
            value = raw
        predicates.append(PrunePredicate(prop=name, value=value))
    return tuple(predicates)


def _trace_options(prune: tuple[str, ...], max_depth: int | None, group: str | None) -> TraceOptions:
    if max_depth is not None and max_depth < 1:
        raise click.UsageError("--max-depth must be >= 1")
    return TraceOptions(
        prune_on=_parse_prune(prune),
        max_depth=max_depth,
        restrict_to_group=EntityId(EntityKind.GROUP, group) if group else None,
    )


def _guarded(cfg: CliConfig, body):
    try:
        return body()
    except LineageError as exc:
        raise _fail(cfg, exc) from None
    except OSError as exc:
        raise _fail(cfg, CliFailure(str(exc))) from None


# ---------------------------------------------------------------------------
# commands


@cli.command()
@pass_config
def init(cfg: CliConfig):
    """Create an empty log file."""
    path = _require_log_path(cfg)

    def body():
        if path.exists():
            raise CliFailure(f"refusing to overwrite existing log {path}")
        with _LogFileLock(path):
            try:
                path.touch(exist_ok=False)
            except OSError as exc:
                raise CliFailure(f"cannot create log {path}: {exc}") from None
        _emit(cfg, {"initialized": str(path)}, f"initialized empty log at {path}")

    _guarded(cfg, body)


@cli.command()
@click.argument("draft_path", type=click.Path(path_type=Path))
@pass_config
def commit(cfg: CliConfig, draft_path: Path):
    """Validate a draft transaction file and append it to the log."""
    path = _require_log_path(cfg)

    def body():
        try:
            draft_bytes = draft_path.read_bytes()
        except OSError as exc:
            raise CliFailure(f"cannot read draft {draft_path}: {exc}") from None
        draft = read_draft(draft_bytes)
        _bind_identity(cfg, draft)

        with _LogFileLock(path):
            log = _load_log(cfg)
            result = log.commit(draft)
            if not result.ok:
                raise _fail_report(cfg, result.report)
            try:
                with open(path, "ab") as handle:
                    handle.write(write_log([result.transaction]))
            except OSError as exc:
                raise CliFailure(f"cannot append to log {path}: {exc}") from None

        warnings = [_violation_payload(v) for v in result.report.warnings]
        text = f"committed seq {result.seq}"
        if warnings:
            text += "\n" + "\n".join(f"  warning: {v.message}" for v in result.report.warnings)
        _emit(cfg, {"seq": result.seq, "warnings": warnings}, text)

    _guarded(cfg, body)


def _bind_identity(cfg: CliConfig, draft: TransactionDraft) -> None:
    if cfg.identity:
        draft.identity_id = EntityId(EntityKind.IDENTITY, cfg.identity)
        return
    if draft.identity_id is not None:
        return
    if cfg.actor:
        provider, sep, actor = cfg.actor.partition(":")
        if not sep or not provider or not actor:
            raise click.UsageError("--actor takes provider:actor")
        identity_value = generate_id_value()
        draft.additions.insert(
            0,
            Identity(
                header=EntityHeader(id=EntityId(EntityKind.IDENTITY, identity_value)),
                external_provider_id=provider,
                external_actor_id=actor,
            ),
        )
        draft.identity_id = EntityId(EntityKind.IDENTITY, identity_value)


def _trace_payload(store: Store, trace: TraceResult) -> dict:
    reached = sorted(trace.reached.items(), key=lambda p: (p[1], p[0].kind.value, p[0].value))
    return {
        "origin": _eid_payload(trace.origin),
        "direction": trace.direction,
        "reached": [
            {**_eid_payload(eid), "depth": depth, "ref": _display_ref(store, eid)}
            for eid, depth in reached
        ],
        "edges": [
            {
                "source": _eid_payload(edge.source),
                "target": _eid_payload(edge.target),
                "via_slot": edge.via_slot.value,
            }
            for edge in trace.edges
        ],
        "pruned_at": [
            {"execution": eid.value, "property": prop} for eid, prop in trace.pruned_at
        ],
        "truncated_by_depth": trace.truncated_by_depth,
    }


def _trace_text(store: Store, trace: TraceResult) -> str:
    lines = [f"{trace.direction} trace from {_display_ref(store, trace.origin)}:"]
    for eid, depth in sorted(trace.reached.items(), key=lambda p: (p[1], p[0].kind.value, p[0].value)):
        tag = "rev " if eid.kind is EntityKind.DATASET_REVISION else "exec"
        lines.append(f"  {depth:>3} {tag} {_display_ref(store, eid)}")
    for eid, prop in trace.pruned_at:
        lines.append(f"  pruned at {_display_ref(store, eid)} ({prop})")
    if trace.truncated_by_depth:
        lines.append("  (truncated by max depth)")
    return "\n".join(lines)


@cli.command()
@click.argument("direction", type=click.Choice(["forward", "backward"]))
@click.argument("ref")
@click.option("--prune", multiple=True, help="Property predicate, e.g. privacy_preserving=true.")
@click.option("--max-depth", type=int, default=None)
@click.option("--group", default=None, help="Restrict traversal to members of this group id.")
@pass_config
def trace(cfg: CliConfig, direction: str, ref: str, prune, max_depth, group):
    """Follow lineage from a dataset revision."""
    opts = _trace_options(prune, max_depth, group)

    def body():
        store = _load_log(cfg).store
        origin = _revision_from_ref(store, ref)
        trace_fn = forward_trace if direction == "forward" else backward_trace
        result = trace_fn(store, origin, opts)
        _emit(cfg, _trace_payload(store, result), _trace_text(store, result))

    _guarded(cfg, body)


@cli.command("ancestors")
@click.argument("ref")
@click.option("--dataset", "dataset_value", required=True, help="Dataset id to filter ancestors by.")
@pass_config
def ancestors_cmd(cfg: CliConfig, ref: str, dataset_value: str):
    """Revisions of a dataset that a revision descends from."""

    def body():
        store = _load_log(cfg).store
        revision = _revision_from_ref(store, ref)
        found = ancestors(store, revision, EntityId(EntityKind.DATASET, dataset_value))
        payload = {"ancestors": [{**_eid_payload(e), "ref": _display_ref(store, e)} for e in found]}
        text = "\n".join(_display_ref(store, e) for e in found) or "(none)"
        _emit(cfg, payload, text)

    _guarded(cfg, body)


@cli.command()
@click.argument("target_ref")
@click.argument("source_ref")
@click.option("--limit", type=int, default=None, help="Stop after this many routes.")
@pass_config
def route(cfg: CliConfig, target_ref: str, source_ref: str, limit: int | None):
    """Enumerate lineage routes carrying SOURCE_REF into TARGET_REF."""

    def body():
        store = _load_log(cfg).store
        target = _revision_from_ref(store, target_ref)
        source = _revision_from_ref(store, source_ref)
        enumeration = lineage_route(store, target, source, limit=limit)
        payload = {
            "routes": [
                [{**_eid_payload(step), "ref": _display_ref(store, step)} for step in r.steps]
                for r in enumeration.routes
            ],
            "truncated": enumeration.truncated,
        }
        lines = [
            "[" + ", ".join(_display_ref(store, step) for step in r.steps) + "]"
            for r in enumeration.routes
        ]
        if enumeration.truncated:
            lines.append("(truncated)")
        _emit(cfg, payload, "\n".join(lines) or "(no routes)")

    _guarded(cfg, body)


@cli.command()
@click.argument("ref")
@pass_config
def closure(cfg: CliConfig, ref: str):
    """Environment closure: everything needed to reproduce a revision."""

    def body():
        store = _load_log(cfg).store
        revision = _revision_from_ref(store, ref)
        result = environment_closure(store, revision)
        payload = {
            "dataset_revisions": [e.value for e in result.dataset_revisions],
            "transform_revisions": [e.value for e in result.transform_revisions],
            "type_revisions": [e.value for e in result.type_revisions],
            "external_refs": {
                "commit_ids": list(result.external_refs.commit_ids),
                "blob_ids": list(result.external_refs.blob_ids),
                "source_ids": list(result.external_refs.source_ids),
            },
        }
        text_lines = [
            "dataset revisions: " + ", ".join(e.value for e in result.dataset_revisions),
            "transform revisions: " + ", ".join(e.value for e in result.transform_revisions),
            "type revisions: " + ", ".join(e.value for e in result.type_revisions),
            "external commits: " + ", ".join(result.external_refs.commit_ids),
            "external blobs: " + ", ".join(result.external_refs.blob_ids),
            "external sources: " + ", ".join(result.external_refs.source_ids),
        ]
        _emit(cfg, payload, "\n".join(text_lines))

    _guarded(cfg, body)


@cli.command()
@click.argument("ref")
@pass_config
def leaves(cfg: CliConfig, ref: str):
    """Unconsumed derivative revisions (the notification frontier)."""

    def body():
        store = _load_log(cfg).store
        revision = _revision_from_ref(store, ref)
        found = impacted_leaves(store, revision)
        payload = {"leaves": [{**_eid_payload(e), "ref": _display_ref(store, e)} for e in found]}
        _emit(cfg, payload, "\n".join(_display_ref(store, e) for e in found) or "(none)")

    _guarded(cfg, body)


@cli.command()
@click.argument("ref")
@pass_config
def resolve(cfg: CliConfig, ref: str):
    """Resolve a textual reference against the live store."""

    def body():
        store = _load_log(cfg).store
        parsed = parse_entity_ref(ref.strip())
        matches = _resolve_ref(store, parsed)
        payload = {
            "matches": [
                {**_eid_payload(e), "ref": _display_ref(store, e)} for e in matches
            ]
        }
        text = "\n".join(f"{e.kind.value} {e.value} ({_display_ref(store, e)})" for e in matches)
        _emit(cfg, payload, text)

    _guarded(cfg, body)


def _resolve_ref(store: Store, parsed) -> list[EntityId]:
    if isinstance(parsed, IdRef):
        matches = [
            EntityId(kind, parsed.value)
            for kind in EntityKind
            if parsed.value in store.entities[kind]
        ]
        if not matches:
            raise EntityNotFound("entity", parsed.value)
        return matches
    if isinstance(parsed, (RevisionRef, RelativeRevisionRef)):
        return [_revision_from_ref(store, format_entity_ref(parsed))]
    if isinstance(parsed, ExecutionRef):
        execution = EntityId(EntityKind.TRANSFORM_EXECUTION, parsed.execution)
        if not store.has(execution):
            raise EntityNotFound(EntityKind.TRANSFORM_EXECUTION.value, parsed.execution)
        record = store.execution(parsed.execution)
        trev = store.transform_revision(record.transform_revision_id.value)
        if trev.header.id.value != parsed.revision or trev.transform_id.value != parsed.transform:
            raise EntityNotFound(EntityKind.TRANSFORM_EXECUTION.value, format_entity_ref(parsed))
        return [execution]
    if isinstance(parsed, RouteRef):
        out: list[EntityId] = []
        for element in parsed.elements:
            out.extend(_resolve_ref(store, element))
        return out
    raise CliFailure(f"unsupported reference {parsed!r}")


@cli.command()
@click.option("--at", "seq", type=int, required=True, help="Transaction seq to reconstruct.")
@pass_config
def snapshot(cfg: CliConfig, seq: int):
    """Reconstruct the store as of a past transaction."""

    def body():
        log = _load_log(cfg)
        store = log.snapshot_at(seq)
        payload = {
            "last_seq": store.last_seq,
            "entities": {
                kind.value: [
                    encode_entity(store.entities[kind][value])
                    for value in sorted(store.entities[kind])
                ]
                for kind in EntityKind
                if store.entities[kind]
            },
        }
        lines = [f"store at seq {seq}:"]
        for kind in EntityKind:
            bucket = store.entities[kind]
            if bucket:
                lines.append(f"  {kind.value}: {', '.join(sorted(bucket))}")
        _emit(cfg, payload, "\n".join(lines))

    _guarded(cfg, body)


def _changeset_payload(changes: ChangeSet) -> dict:
    return {
        "added": [_eid_payload(e) for e in changes.added],
        "modified": [_eid_payload(e) for e in changes.modified],
        "removed": [_eid_payload(e) for e in changes.removed],
    }


@cli.command()
@click.argument("seq_a", type=int)
@click.argument("seq_b", type=int)
@pass_config
def diff(cfg: CliConfig, seq_a: int, seq_b: int):
    """Entities whose live state differs between two snapshots."""

    def body():
        log = _load_log(cfg)
        changes = log.diff(seq_a, seq_b)
        lines = (
            [f"+ {e.kind.value} {e.value}" for e in changes.added]
            + [f"~ {e.kind.value} {e.value}" for e in changes.modified]
            + [f"- {e.kind.value} {e.value}" for e in changes.removed]
        )
        _emit(cfg, _changeset_payload(changes), "\n".join(lines) or "(no changes)")

    _guarded(cfg, body)


_DEPRECATION_KINDS = (
    EntityKind.DATASET,
    EntityKind.DATASET_REVISION,
    EntityKind.TRANSFORM,
    EntityKind.TRANSFORM_REVISION,
)


@cli.command("deprecation-report")
@click.argument("entity_value")
@pass_config
def deprecation_report_cmd(cfg: CliConfig, entity_value: str):
    """Dependents and notification frontier of a deprecation candidate."""

    def body():
        store = _load_log(cfg).store
        matches = [
            EntityId(kind, entity_value)
            for kind in _DEPRECATION_KINDS
            if entity_value in store.entities[kind]
        ]
        if not matches:
            raise EntityNotFound("entity", entity_value)
        if len(matches) > 1:
            raise CliFailure(
                f"{entity_value!r} is ambiguous across kinds: "
                + ", ".join(m.kind.value for m in matches)
            )
        report = deprecation_report(store, matches[0])
        payload = {
            "entity": _eid_payload(matches[0]),
            "dependents": [
                {**_eid_payload(e), "path_length": depth} for e, depth in report.dependents
            ],
            "leaves_to_notify": [_eid_payload(e) for e in report.leaves_to_notify],
        }
        lines = [f"dependents of {entity_value} ({matches[0].kind.value}):"]
        for eid, depth in report.dependents:
            lines.append(f"  {depth:>3} {eid.kind.value} {_display_ref(store, eid)}")
        lines.append(
            "leaves to notify: "
            + (", ".join(_display_ref(store, e) for e in report.leaves_to_notify) or "(none)")
        )
        _emit(cfg, payload, "\n".join(lines))

    _guarded(cfg, body)


@cli.command("export-dot")
@click.argument("ref")
@click.option(
    "--direction",
    type=click.Choice(["forward", "backward"]),
    default="forward",
    show_default=True,
)
@click.option("--prune", multiple=True)
@click.option("--max-depth", type=int, default=None)
@pass_config
def export_dot_cmd(cfg: CliConfig, ref: str, direction: str, prune, max_depth):
    """Write the traced subgraph as Graphviz DOT."""
    opts = _trace_options(prune, max_depth, None)

    def body():
        store = _load_log(cfg).store
        revision = _revision_from_ref(store, ref)
        text = dot_module.export_dot(store, [revision], direction, opts)
        if cfg.fmt == "json":
            click.echo(canonical_json({"dot": text}))
        else:
            click.echo(text, nl=False)

    _guarded(cfg, body)


@cli.command()
@pass_config
def validate(cfg: CliConfig):
    """Replay the log and run the full-store invariant scan."""

    def body():
        log = _load_log(cfg)
        store = log.store
        report = ValidationReport()
        for record in store.iter_all():
            report.extend(validate_record(record, store))

        from .changelog import find_lineage_cycle

        stuck = find_lineage_cycle(store)
        if stuck is not None:
            report.add(
                "error", "lineage-cycle", None, None, f"cycle among: {', '.join(stuck[:6])}"
            )

        rebuilt = build_indexes(store.entities)
        current = (
            store.revisions_by_dataset,
            store.revisions_by_transform,
            store.consumers_by_revision,
            store.slots_by_execution,
            store.slots_by_transform_revision,
        )
        if rebuilt != current:
            report.add("error", "index-divergence", None, None, "derived indexes are stale")

        payload = {
            "entities": store.count(),
            "last_seq": store.last_seq,
            **_report_payload(report),
        }
        if not report.ok:
            raise _abort(
                cfg,
                payload,
                "validation failed:\n" + "\n".join(f"  {v}" for v in report.violations),
            )
        _emit(
            cfg,
            payload,
            f"ok: {store.count()} entities, seq {store.last_seq}"
            + (f", {len(report.warnings)} warning(s)" if report.warnings else ""),
        )

    _guarded(cfg, body)


@cli.command("validate-file")
@click.argument("path", type=click.Path(path_type=Path))
@click.option(
    "--kind",
    "file_kind",
    type=click.Choice(["auto", "log", "draft"]),
    default="auto",
    show_default=True,
)
@pass_config
def validate_file(cfg: CliConfig, path: Path, file_kind: str):
    """Structurally check a log or draft file without needing --log."""

    def body():
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise CliFailure(f"cannot read {path}: {exc}") from None

        resolved_kind = file_kind
        if resolved_kind == "auto":
            first_line = data.split(b"\n", 1)[0]
            try:
                head = json.loads(first_line) if first_line.strip() else {}
            except json.JSONDecodeError:
                head = {}
            resolved_kind = "draft" if isinstance(head, dict) and "seq" not in head else "log"
            if not data:
                resolved_kind = "log"

        if resolved_kind == "log":
            transactions = read_log(data)
            _emit(
                cfg,
                {"kind": "log", "transactions": len(transactions)},
                f"ok: log with {len(transactions)} transaction(s)",
            )
        else:
            draft = read_draft(data)
            _emit(
                cfg,
                {
                    "kind": "draft",
                    "additions": len(draft.additions),
                    "modifications": len(draft.modifications),
                    "removals": len(draft.removals),
                },
                f"ok: draft with {len(draft.additions)} addition(s)",
            )

    _guarded(cfg, body)


if __name__ == "__main__":
    main()
