"""Exception hierarchy shared by all engine modules."""

from __future__ import annotations


class LineageError(Exception):
    """Base class for all errors raised by this package."""


class RefSyntaxError(LineageError):
    """Malformed textual entity reference.

    ``offset`` is the byte offset into the original string where
    parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
        self.reason = message


class EntityNotFound(LineageError):
    def __init__(self, kind: str, value: str):
        super().__init__(f"no live {kind} entity with id {value!r}")
        self.kind = kind
        self.value = value


class EmptyDataset(LineageError):
    def __init__(self, dataset: str):
        super().__init__(f"dataset {dataset!r} has no live revisions")
        self.dataset = dataset


class IndexOutOfRange(LineageError):
    def __init__(self, k: int, available: int):
        super().__init__(f"head-{k} requested but only {available} live revision(s) exist")
        self.k = k
        self.available = available


class RevisionNotInDataset(LineageError):
    def __init__(self, revision: str, dataset: str):
        super().__init__(f"revision {revision!r} does not belong to dataset {dataset!r}")
        self.revision = revision
        self.dataset = dataset


class UnsupportedKind(LineageError):
    def __init__(self, kind: str, operation: str):
        super().__init__(f"{operation} does not support {kind} entities")
        self.kind = kind
        self.operation = operation


class OutOfRange(LineageError):
    def __init__(self, seq: int, last_seq: int):
        super().__init__(f"seq {seq} out of range 0..{last_seq}")
        self.seq = seq
        self.last_seq = last_seq


class ReplayDiverged(LineageError):
    """A historical transaction failed validation during replay.

    Signals a corrupted or hand-edited log.
    """

    def __init__(self, seq: int, report):
        super().__init__(f"replay diverged at transaction seq {seq}: {report.summary()}")
        self.seq = seq
        self.report = report


class MalformedLine(LineageError):
    def __init__(self, line: int, cause: str):
        super().__init__(f"line {line}: {cause}")
        self.line = line
        self.cause = cause


class NonMonotoneSeq(LineageError):
    def __init__(self, line: int, seq: int, previous: int):
        super().__init__(f"line {line}: seq {seq} not greater than previous seq {previous}")
        self.line = line
        self.seq = seq
        self.previous = previous


class UnknownKind(LineageError):
    def __init__(self, line: int, kind: str):
        super().__init__(f"line {line}: unknown entity kind {kind!r}")
        self.line = line
        self.kind = kind


class LogLocked(LineageError):
    def __init__(self, path: str):
        super().__init__(f"log is locked by another process: {path}")
        self.path = path
