"""Log and draft wire formats.

A log file is a sequence of LF-terminated lines, each one complete
transaction as a canonical JSON object (keys sorted, no insignificant
whitespace, UTF-8). A commit draft is a single such object without the
store-assigned ``seq``/``timestamp``. Reading validates structure only;
semantic validation happens at replay/commit.

Unknown entity kinds are rejected; unknown fields inside known kinds
are preserved verbatim and round-tripped.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Any, Iterable

from .changelog import Transaction, TransactionDraft
from .errors import MalformedLine, NonMonotoneSeq, UnknownKind
from .model import (
    KIND_TO_CLASS,
    NAMED_TRACING_PROPERTIES,
    Direction,
    EntityHeader,
    EntityId,
    EntityKind,
    EntityRecord,
    TracingProperties,
    entity_id,
)


class _DecodeError(Exception):
    pass


class _UnknownKindValue(Exception):
    def __init__(self, kind: str):
        self.kind = kind


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# ---------------------------------------------------------------------------
# timestamps: RFC 3339, always UTC with a Z suffix


def format_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(text: str) -> datetime:
    if not isinstance(text, str):
        raise _DecodeError("timestamp must be a string")
    normalized = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        parsed = datetime.fromisoformat(normalized)
    except ValueError as exc:
        raise _DecodeError(f"bad timestamp {text!r}: {exc}") from None
    if parsed.tzinfo is None:
        raise _DecodeError(f"timestamp {text!r} lacks a UTC offset")
    return parsed.astimezone(timezone.utc)


# ---------------------------------------------------------------------------
# entity encoding

# (wire name, attribute name, codec); codec is a tag or (tag, entity kind)
_FIELD_SPECS: dict[EntityKind, tuple[tuple[str, str, Any], ...]] = {
    EntityKind.TYPE: (
        ("external_registry_id", "external_registry_id", "str"),
        ("name", "name", "str"),
    ),
    EntityKind.TYPE_REVISION: (
        ("type_id", "type_id", ("ref", EntityKind.TYPE)),
        ("external_type_id", "external_type_id", "str"),
        ("backwards_compatible", "backwards_compatible", "bool"),
        ("version", "version", "str"),
    ),
    EntityKind.DATASET: (
        ("type_id", "type_id", ("ref", EntityKind.TYPE)),
        ("external_provider_id", "external_provider_id", "str"),
        ("external_repo_id", "external_repo_id", "str"),
        ("name", "name", "str"),
    ),
    EntityKind.DATASET_REVISION: (
        ("dataset_id", "dataset_id", ("ref", EntityKind.DATASET)),
        ("type_revision_id", "type_revision_id", ("ref", EntityKind.TYPE_REVISION)),
        (
            "transform_execution_slot_id",
            "producer_slot_id",
            ("optref", EntityKind.TRANSFORM_EXECUTION_SLOT),
        ),
        ("external_source_id", "external_source_id", "optstr"),
        ("external_blob_id", "external_blob_id", "str"),
        ("sequence", "sequence", "optint"),
    ),
    EntityKind.TRANSFORM: (
        ("external_provider_id", "external_provider_id", "str"),
        ("external_repo_id", "external_repo_id", "str"),
        ("name", "name", "str"),
    ),
    EntityKind.TRANSFORM_REVISION: (
        ("transform_id", "transform_id", ("ref", EntityKind.TRANSFORM)),
        ("external_commit_id", "external_commit_id", "str"),
        ("tracing_properties", "tracing_properties", "props"),
        ("comment", "comment", "str"),
        ("sequence", "sequence", "optint"),
    ),
    EntityKind.TRANSFORM_SLOT: (
        ("transform_revision_id", "transform_revision_id", ("ref", EntityKind.TRANSFORM_REVISION)),
        ("type_revision_id", "type_revision_id", ("ref", EntityKind.TYPE_REVISION)),
        ("name", "name", "str"),
        ("direction", "direction", "direction"),
    ),
    EntityKind.TRANSFORM_EXECUTION: (
        ("transform_revision_id", "transform_revision_id", ("ref", EntityKind.TRANSFORM_REVISION)),
        ("flow_execution_id", "flow_execution_id", ("optref", EntityKind.FLOW_EXECUTION)),
    ),
    EntityKind.TRANSFORM_EXECUTION_SLOT: (
        (
            "transform_execution_id",
            "transform_execution_id",
            ("ref", EntityKind.TRANSFORM_EXECUTION),
        ),
        ("transform_slot_id", "transform_slot_id", ("ref", EntityKind.TRANSFORM_SLOT)),
        ("dataset_id", "dataset_id", ("ref", EntityKind.DATASET)),
        ("dataset_revision_id", "dataset_revision_id", ("ref", EntityKind.DATASET_REVISION)),
    ),
    EntityKind.FLOW: (
        ("external_provider_id", "external_provider_id", "str"),
        ("external_flow_id", "external_flow_id", "str"),
        ("name", "name", "str"),
    ),
    EntityKind.FLOW_REVISION: (
        ("flow_id", "flow_id", ("ref", EntityKind.FLOW)),
        ("external_revision_id", "external_revision_id", "str"),
        ("definition", "definition", "str"),
    ),
    EntityKind.FLOW_EXECUTION: (
        ("flow_revision_id", "flow_revision_id", ("ref", EntityKind.FLOW_REVISION)),
        ("execution_log", "execution_log", "str"),
        (
            "transform_execution_ids",
            "transform_execution_ids",
            ("reflist", EntityKind.TRANSFORM_EXECUTION),
        ),
    ),
    EntityKind.GROUP: (("items", "items", "anyreflist"),),
    EntityKind.IDENTITY: (
        ("external_provider_id", "external_provider_id", "str"),
        ("external_actor_id", "external_actor_id", "str"),
        ("attributes", "attributes", "strmap"),
    ),
}

_HEADER_KEYS = ("kind", "id", "deprecated", "termination_sla")


def encode_entity(record: EntityRecord) -> dict[str, Any]:
    kind = record.KIND
    out: dict[str, Any] = {
        "kind": kind.value,
        "id": entity_id(record).value,
        "deprecated": record.header.deprecated,
    }
    if record.header.termination_sla is not None:
        out["termination_sla"] = format_timestamp(record.header.termination_sla)

    for wire, attr, codec in _FIELD_SPECS[kind]:
        value = getattr(record, attr)
        if codec == "str":
            out[wire] = value
        elif codec == "optstr":
            if value is not None:
                out[wire] = value
        elif codec == "bool":
            out[wire] = bool(value)
        elif codec == "optint":
            if value is not None:
                out[wire] = value
        elif codec == "direction":
            out[wire] = value.value
        elif codec == "props":
            out[wire] = _encode_props(value)
        elif codec == "strmap":
            if value:
                out[wire] = dict(sorted(value.items()))
        elif codec == "anyreflist":
            out[wire] = [{"id": eid.value, "kind": eid.kind.value} for eid in value]
        else:
            tag = codec[0]
            if tag == "ref":
                out[wire] = value.value
            elif tag == "optref":
                if value is not None:
                    out[wire] = value.value
            elif tag == "reflist":
                out[wire] = [eid.value for eid in value]

    for key, value in record.extra.items():
        if key in out or key in _HEADER_KEYS:
            raise ValueError(f"extra field {key!r} shadows a known field")
        out[key] = value
    return out


def _encode_props(props: TracingProperties) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for name in NAMED_TRACING_PROPERTIES:
        value = getattr(props, name)
        if value is not None:
            out[name] = value
    if props.extensions:
        out["extensions"] = dict(sorted(props.extensions.items()))
    return out


def decode_entity(obj: Any, *, allow_blank_id: bool = False) -> EntityRecord:
    if not isinstance(obj, dict):
        raise _DecodeError(f"entity must be an object, got {type(obj).__name__}")
    kind_value = obj.get("kind")
    if not isinstance(kind_value, str):
        raise _DecodeError("entity lacks a string 'kind'")
    try:
        kind = EntityKind(kind_value)
    except ValueError:
        raise _UnknownKindValue(kind_value) from None

    id_value = obj.get("id", "" if allow_blank_id else None)
    if id_value is None:
        raise _DecodeError(f"{kind.value} entity lacks an 'id'")
    if not isinstance(id_value, str):
        raise _DecodeError("'id' must be a string")

    deprecated = obj.get("deprecated", False)
    if not isinstance(deprecated, bool):
        raise _DecodeError("'deprecated' must be a boolean")
    termination = obj.get("termination_sla")
    header = EntityHeader(
        id=EntityId(kind, id_value),
        deprecated=deprecated,
        termination_sla=parse_timestamp(termination) if termination is not None else None,
    )

    kwargs: dict[str, Any] = {"header": header}
    consumed = set(_HEADER_KEYS)
    for wire, attr, codec in _FIELD_SPECS[kind]:
        consumed.add(wire)
        raw = obj.get(wire)
        kwargs[attr] = _decode_field(kind, wire, codec, raw)

    extra = {key: obj[key] for key in obj if key not in consumed}
    if extra:
        kwargs["extra"] = extra
    return KIND_TO_CLASS[kind](**kwargs)


def _decode_field(kind: EntityKind, wire: str, codec: Any, raw: Any) -> Any:
    def expect(condition: bool, what: str) -> None:
        if not condition:
            raise _DecodeError(f"{kind.value}.{wire}: expected {what}, got {raw!r}")

    if codec == "str":
        if raw is None:
            return ""
        expect(isinstance(raw, str), "a string")
        return raw
    if codec == "optstr":
        if raw is None:
            return None
        expect(isinstance(raw, str), "a string")
        return raw
    if codec == "bool":
        if raw is None:
            return False
        expect(isinstance(raw, bool), "a boolean")
        return raw
    if codec == "optint":
        if raw is None:
            return None
        expect(isinstance(raw, int) and not isinstance(raw, bool), "an integer")
        return raw
    if codec == "direction":
        expect(isinstance(raw, str) and raw in ("input", "output"), "'input' or 'output'")
        return Direction(raw)
    if codec == "props":
        return _decode_props(kind, wire, raw)
    if codec == "strmap":
        if raw is None:
            return {}
        expect(
            isinstance(raw, dict)
            and all(isinstance(k, str) and isinstance(v, str) for k, v in raw.items()),
            "a string map",
        )
        return dict(raw)
    if codec == "anyreflist":
        if raw is None:
            return ()
        expect(isinstance(raw, list), "a list")
        items = []
        for element in raw:
            expect(
                isinstance(element, dict)
                and isinstance(element.get("id"), str)
                and isinstance(element.get("kind"), str),
                "objects with string id/kind",
            )
            try:
                item_kind = EntityKind(element["kind"])
            except ValueError:
                raise _UnknownKindValue(element["kind"]) from None
            items.append(EntityId(item_kind, element["id"]))
        return tuple(items)

    tag = codec[0]
    ref_kind: EntityKind = codec[1]
    if tag == "ref":
        expect(isinstance(raw, str), "an id string")
        return EntityId(ref_kind, raw)
    if tag == "optref":
        if raw is None:
            return None
        expect(isinstance(raw, str), "an id string")
        return EntityId(ref_kind, raw)
    if tag == "reflist":
        if raw is None:
            return ()
        expect(
            isinstance(raw, list) and all(isinstance(v, str) for v in raw), "a list of id strings"
        )
        return tuple(EntityId(ref_kind, v) for v in raw)
    raise AssertionError(f"unhandled codec {codec!r}")


def _decode_props(kind: EntityKind, wire: str, raw: Any) -> TracingProperties:
    if raw is None:
        return TracingProperties()
    if not isinstance(raw, dict):
        raise _DecodeError(f"{kind.value}.{wire}: expected an object, got {raw!r}")
    kwargs: dict[str, Any] = {}
    for name in NAMED_TRACING_PROPERTIES:
        value = raw.get(name)
        if value is not None and not isinstance(value, bool):
            raise _DecodeError(f"{kind.value}.{wire}.{name}: expected a boolean, got {value!r}")
        kwargs[name] = value
    extensions = raw.get("extensions", {})
    if not isinstance(extensions, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in extensions.items()
    ):
        raise _DecodeError(f"{kind.value}.{wire}.extensions: expected a string map")
    unknown = set(raw) - set(NAMED_TRACING_PROPERTIES) - {"extensions"}
    if unknown:
        raise _DecodeError(f"{kind.value}.{wire}: unexpected keys {sorted(unknown)}")
    return TracingProperties(extensions=dict(extensions), **kwargs)


# ---------------------------------------------------------------------------
# transactions and drafts


def _encode_removal(eid: EntityId) -> dict[str, str]:
    return {"id": eid.value, "kind": eid.kind.value}


def _decode_removal(obj: Any) -> EntityId:
    if not (
        isinstance(obj, dict)
        and isinstance(obj.get("id"), str)
        and isinstance(obj.get("kind"), str)
    ):
        raise _DecodeError(f"removal must be an object with string id/kind, got {obj!r}")
    try:
        kind = EntityKind(obj["kind"])
    except ValueError:
        raise _UnknownKindValue(obj["kind"]) from None
    return EntityId(kind, obj["id"])


def encode_transaction(txn: Transaction) -> dict[str, Any]:
    out: dict[str, Any] = {
        "seq": txn.seq,
        "identity_id": txn.identity_id.value,
        "timestamp": format_timestamp(txn.timestamp),
        "additions": [encode_entity(r) for r in txn.additions],
        "modifications": [encode_entity(r) for r in txn.modifications],
        "removals": [_encode_removal(eid) for eid in txn.removals],
    }
    if txn.comment is not None:
        out["comment"] = txn.comment
    return out


_TXN_REQUIRED = {"seq", "identity_id", "timestamp", "additions", "modifications", "removals"}
_TXN_ALLOWED = _TXN_REQUIRED | {"comment"}


def decode_transaction(obj: Any) -> Transaction:
    if not isinstance(obj, dict):
        raise _DecodeError("transaction must be a JSON object")
    missing = _TXN_REQUIRED - set(obj)
    if missing:
        raise _DecodeError(f"transaction lacks fields: {sorted(missing)}")
    unexpected = set(obj) - _TXN_ALLOWED
    if unexpected:
        raise _DecodeError(f"unexpected transaction fields: {sorted(unexpected)}")

    seq = obj["seq"]
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 1:
        raise _DecodeError(f"seq must be a positive integer, got {seq!r}")
    if not isinstance(obj["identity_id"], str):
        raise _DecodeError("identity_id must be a string")
    comment = obj.get("comment")
    if comment is not None and not isinstance(comment, str):
        raise _DecodeError("comment must be a string")
    for bucket in ("additions", "modifications", "removals"):
        if not isinstance(obj[bucket], list):
            raise _DecodeError(f"{bucket} must be a list")

    return Transaction(
        seq=seq,
        identity_id=EntityId(EntityKind.IDENTITY, obj["identity_id"]),
        timestamp=parse_timestamp(obj["timestamp"]),
        additions=tuple(decode_entity(e) for e in obj["additions"]),
        modifications=tuple(decode_entity(e) for e in obj["modifications"]),
        removals=tuple(_decode_removal(e) for e in obj["removals"]),
        comment=comment,
    )


def write_log(transactions: Iterable[Transaction]) -> bytes:
    """Canonical serialization: one LF-terminated JSON object per line."""
    chunks = [canonical_json(encode_transaction(txn)) + "\n" for txn in transactions]
    return "".join(chunks).encode("utf-8")


def read_log(data: bytes) -> list[Transaction]:
    """Parse and structurally validate a log file; no replay happens here."""
    if not data:
        return []
    raw_lines = data.split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()

    transactions: list[Transaction] = []
    previous_seq = 0
    for index, raw in enumerate(raw_lines, start=1):
        if not raw.strip():
            raise MalformedLine(index, "empty line")
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedLine(index, f"not valid UTF-8: {exc}") from None
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedLine(index, f"invalid JSON: {exc}") from None
        try:
            txn = decode_transaction(obj)
        except _UnknownKindValue as exc:
            raise UnknownKind(index, exc.kind) from None
        except _DecodeError as exc:
            raise MalformedLine(index, str(exc)) from None
        if txn.seq <= previous_seq:
            raise NonMonotoneSeq(index, txn.seq, previous_seq)
        previous_seq = txn.seq
        transactions.append(txn)
    return transactions


_DRAFT_ALLOWED = {"identity_id", "timestamp", "additions", "modifications", "removals", "comment"}


def encode_draft(draft: TransactionDraft) -> dict[str, Any]:
    out: dict[str, Any] = {
        "additions": [encode_entity(r) for r in draft.additions],
        "modifications": [encode_entity(r) for r in draft.modifications],
        "removals": [_encode_removal(eid) for eid in draft.removals],
    }
    if draft.identity_id is not None:
        out["identity_id"] = draft.identity_id.value
    if draft.timestamp is not None:
        out["timestamp"] = format_timestamp(draft.timestamp)
    if draft.comment is not None:
        out["comment"] = draft.comment
    return out


def write_draft(draft: TransactionDraft) -> bytes:
    return (canonical_json(encode_draft(draft)) + "\n").encode("utf-8")


def read_draft(data: bytes) -> TransactionDraft:
    """Parse a commit draft: one transaction-shaped object without seq."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedLine(1, f"invalid draft: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedLine(1, "draft must be a JSON object")
    if "seq" in obj:
        raise MalformedLine(1, "draft must not carry a seq; the store assigns it")
    unexpected = set(obj) - _DRAFT_ALLOWED
    if unexpected:
        raise MalformedLine(1, f"unexpected draft fields: {sorted(unexpected)}")

    identity_raw = obj.get("identity_id")
    if identity_raw is not None and not isinstance(identity_raw, str):
        raise MalformedLine(1, "identity_id must be a string")
    comment = obj.get("comment")
    if comment is not None and not isinstance(comment, str):
        raise MalformedLine(1, "comment must be a string")
    for bucket in ("additions", "modifications", "removals"):
        if bucket in obj and not isinstance(obj[bucket], list):
            raise MalformedLine(1, f"{bucket} must be a list")

    try:
        additions = [decode_entity(e, allow_blank_id=True) for e in obj.get("additions", [])]
        modifications = [decode_entity(e) for e in obj.get("modifications", [])]
        removals = [_decode_removal(e) for e in obj.get("removals", [])]
        timestamp_raw = obj.get("timestamp")
        timestamp = parse_timestamp(timestamp_raw) if timestamp_raw is not None else None
    except _UnknownKindValue as exc:
        raise UnknownKind(1, exc.kind) from None
    except _DecodeError as exc:
        raise MalformedLine(1, str(exc)) from None

    return TransactionDraft(
        identity_id=EntityId(EntityKind.IDENTITY, identity_raw) if identity_raw else None,
        additions=additions,
        modifications=modifications,
        removals=removals,
        comment=comment,
        timestamp=timestamp,
    )
