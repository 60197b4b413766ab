"""Declaration tree produced by the parser and consumed by the model builder.

Spans are carried for diagnostics only and never take part in equality, so a
tree that went through ``serialize``/``parse`` compares equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .expr import Assign, Predicate


@dataclass(frozen=True, order=True)
class Span:
    line: int
    column: int
    end_line: int
    end_column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


def _span() -> Optional[Span]:
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class StageRef:
    machine: str
    kind: str
    label: Optional[str] = None
    span: Optional[Span] = _span()

    @property
    def id(self) -> str:
        return stage_id(self.machine, self.kind, self.label)


def stage_id(machine: str, kind: str, label: Optional[str]) -> str:
    return f"{machine}.{kind}[{label}]" if label is not None else f"{machine}.{kind}"


@dataclass(frozen=True)
class AttrDecl:
    name: str
    nonneg: bool = False
    default: int = 0
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class ThingDecl:
    name: str
    attrs: tuple[AttrDecl, ...] = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class StageDecl:
    kind: str
    label: Optional[str] = None
    thing: Optional[str] = None
    sink: bool = False
    guard: Optional[Predicate] = None
    actions: tuple[Assign, ...] = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class MachineDecl:
    name: str
    items: tuple[Union[StageDecl, "MachineDecl", ThingDecl], ...] = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class FlowDecl:
    name: str
    src: StageRef
    dst: StageRef
    guard: Optional[Predicate] = None
    ticks: int = 1
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class TriggerDecl:
    name: str
    src: StageRef
    dst: StageRef
    span: Optional[Span] = _span()


ModelItem = Union[MachineDecl, ThingDecl, FlowDecl, TriggerDecl]


@dataclass(frozen=True)
class ModelDecl:
    name: str
    items: tuple[ModelItem, ...] = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class EventDecl:
    name: str
    description: str
    region: tuple[Union[StageRef, str], ...]
    anchor: Optional[StageRef] = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class ChronEdge:
    src: str
    dst: str
    forbid: bool = False
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class ChronologyDecl:
    edges: tuple[ChronEdge, ...] = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class ControlDecl:
    name: str
    from_event: str
    to_event: str
    threshold: int
    message: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Ast:
    model: ModelDecl
    events: tuple[EventDecl, ...] = ()
    chronology: Optional[ChronologyDecl] = None
    controls: tuple[ControlDecl, ...] = ()
