"""Textual entity references.

Grammar (identifiers may not contain ``:[],`` or whitespace)::

    ref      = route | element
    route    = "[" [ element { "," element } ] "]"
    element  = ident                       bare entity id
             | ident ":" ident             dataset : revision
             | ident ":" relative          dataset : earliest|latest|head-k
             | ident ":" ident ":" ident   transform : revision : execution
    relative = "earliest" | "latest" | "head-" digits

``latest`` is ``head-0``; ``head-k`` addresses the revision with the
(k+1)-th highest sequence. The relative keywords are reserved: a
revision whose literal id is e.g. ``latest`` cannot be addressed by id
through this grammar.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .errors import RefSyntaxError
from .ids import RESERVED_CHARS


@dataclass(frozen=True)
class IdRef:
    """A bare identifier; the entity kind is decided by the consumer."""

    value: str


@dataclass(frozen=True)
class RevisionRef:
    dataset: str
    revision: str


@dataclass(frozen=True)
class RelativeRevisionRef:
    dataset: str
    head_offset: int = 0  # 0 == latest
    earliest: bool = False


@dataclass(frozen=True)
class ExecutionRef:
    transform: str
    revision: str
    execution: str


@dataclass(frozen=True)
class RouteRef:
    elements: tuple["ElementRef", ...]


ElementRef = Union[IdRef, RevisionRef, RelativeRevisionRef, ExecutionRef]
EntityRef = Union[ElementRef, RouteRef]


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, message: str, pos: int | None = None) -> RefSyntaxError:
        where = self.pos if pos is None else pos
        return RefSyntaxError(message, _byte_offset(self.text, where))

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_ident(self) -> str:
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in RESERVED_CHARS or ch.isspace():
                break
            self.pos += 1
        if self.pos == start:
            raise self.fail("expected identifier")
        return self.text[start:self.pos]

    def skip_spaces(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] == " ":
            self.pos += 1

    def parse_element(self) -> ElementRef:
        first = self.take_ident()
        if self.peek() != ":":
            return IdRef(first)
        self.pos += 1
        second = self.take_ident()
        relative = self._as_relative(first, second)
        if relative is not None:
            if self.peek() == ":":
                raise self.fail("relative revision reference takes no further parts")
            return relative
        if self.peek() != ":":
            return RevisionRef(dataset=first, revision=second)
        self.pos += 1
        third = self.take_ident()
        if self.peek() == ":":
            raise self.fail("too many ':' separated parts")
        return ExecutionRef(transform=first, revision=second, execution=third)

    def _as_relative(self, dataset: str, token: str) -> RelativeRevisionRef | None:
        if token == "earliest":
            return RelativeRevisionRef(dataset=dataset, earliest=True)
        if token == "latest":
            return RelativeRevisionRef(dataset=dataset, head_offset=0)
        if token.startswith("head-") and token[len("head-"):].isdigit():
            return RelativeRevisionRef(dataset=dataset, head_offset=int(token[len("head-"):]))
        return None

    def parse_route(self) -> RouteRef:
        assert self.peek() == "["
        self.pos += 1
        elements: list[ElementRef] = []
        self.skip_spaces()
        if self.peek() == "]":
            self.pos += 1
            return RouteRef(())
        while True:
            self.skip_spaces()
            element = self.parse_element()
            elements.append(element)
            self.skip_spaces()
            ch = self.peek()
            if ch == ",":
                self.pos += 1
                continue
            if ch == "]":
                self.pos += 1
                return RouteRef(tuple(elements))
            raise self.fail("expected ',' or ']' in route")

    def parse(self) -> EntityRef:
        ref: EntityRef
        if self.peek() == "[":
            ref = self.parse_route()
        else:
            ref = self.parse_element()
        if self.pos != len(self.text):
            raise self.fail("unexpected trailing input")
        return ref


def parse_entity_ref(text: str) -> EntityRef:
    """Parse the textual notation into a structured reference.

    Raises :class:`RefSyntaxError` with the byte offset of the first
    offending character.
    """
    if not text:
        raise RefSyntaxError("empty reference", 0)
    return _Parser(text).parse()


def format_entity_ref(ref: EntityRef) -> str:
    """Render a reference in canonical form (inverse of parsing)."""
    if isinstance(ref, IdRef):
        return ref.value
    if isinstance(ref, RevisionRef):
        return f"{ref.dataset}:{ref.revision}"
    if isinstance(ref, RelativeRevisionRef):
        if ref.earliest:
            return f"{ref.dataset}:earliest"
        if ref.head_offset == 0:
            return f"{ref.dataset}:latest"
        return f"{ref.dataset}:head-{ref.head_offset}"
    if isinstance(ref, ExecutionRef):
        return f"{ref.transform}:{ref.revision}:{ref.execution}"
    if isinstance(ref, RouteRef):
        return "[" + ", ".join(format_entity_ref(e) for e in ref.elements) + "]"
    raise TypeError(f"not an entity reference: {ref!r}")
