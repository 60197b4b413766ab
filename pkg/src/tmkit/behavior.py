"""Events over a static model, and chronologies of permitted event successions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from . import syntax as syn
from .model import Diagnostic, Model, sort_diagnostics

MAX_ENUMERATION = 12


class UnknownEvent(KeyError):
    pass


class LimitExceeded(ValueError):
    pass


class TraceFormatError(ValueError):
    pass


class Occurrence(NamedTuple):
    event: str
    tick: int


Trace = Sequence[Occurrence]


@dataclass(frozen=True)
class Event:
    """A named region of the static model plus the stage that marks its occurrence.

    The time part of an event is the occurrence log kept by the simulator.
    """

    id: str
    description: str
    region: tuple[str, ...]  # stage ids and flow ids
    anchor: str
    span: Optional[syn.Span] = field(default=None, compare=False, repr=False)

    def as_machine(self) -> syn.MachineDecl:
        """The event drawn as a machine holding region, time and event submachines."""
        return syn.MachineDecl(self.id, (
            syn.MachineDecl(f"{self.id}_region"),
            syn.MachineDecl(f"{self.id}_time", (syn.StageDecl("create", "tick"),
                                                syn.StageDecl("process", "tick"))),
            syn.MachineDecl(f"{self.id}_event"),
        ))


def region_stages(model: Model, event: Event) -> list[str]:
    """Stages of the region, flow endpoints included, in listing order."""
    out: list[str] = []
    for item in event.region:
        if item in model.stages:
            ids = [item]
        elif item in model.flows:
            ids = [model.flows[item].src, model.flows[item].dst]
        else:
            ids = []
        out.extend(i for i in ids if i not in out)
    return out


def default_anchor(model: Model, stages: Sequence[str]) -> Optional[str]:
    """The topologically last stage of the region; later listing wins ties."""
    if not stages:
        return None
    inside = set(stages)
    succ = {s: [f.dst for f in model.outgoing(s) if f.dst in inside and f.dst != s]
            for s in stages}
    # longest path into each stage; capped at the region size so cycles terminate
    into = dict.fromkeys(stages, 0)
    for _ in range(len(stages)):
        for s in stages:
            for d in succ[s]:
                into[d] = max(into[d], min(into[s] + 1, len(stages)))
    sinks = [s for s in stages if not succ[s]] or list(stages)
    best = max(into[s] for s in sinks)
    return [s for s in sinks if into[s] == best][-1]


def build_events(model: Model, decls: Iterable[syn.EventDecl]) -> list[Event]:
    events = []
    for d in decls:
        region = tuple(r.id if isinstance(r, syn.StageRef) else r for r in d.region)
        ev = Event(d.name, d.description, region, "", d.span)
        anchor = d.anchor.id if d.anchor is not None else (
            default_anchor(model, region_stages(model, ev)) or "")
        events.append(Event(d.name, d.description, region, anchor, d.span))
    return events


def validate_event(model: Model, event: Event) -> list[Diagnostic]:
    """Empty iff the region is a nonempty, weakly flow-connected part of ``model``
    and the anchor lies inside it."""
    diags: list[Diagnostic] = []
    where = event.span
    if not event.region:
        return [Diagnostic("EmptyRegion", f"event '{event.id}' has an empty region", where,
                           event.id)]
    for item in event.region:
        if item not in model.stages and item not in model.flows:
            diags.append(Diagnostic("ForeignElement",
                                    f"event '{event.id}': '{item}' is not part of model "
                                    f"'{model.name}'", where, item))
    stages = region_stages(model, event)
    if event.anchor not in stages:
        diags.append(Diagnostic("AnchorOutsideRegion",
                                f"event '{event.id}': anchor '{event.anchor}' is not in its region",
                                where, event.anchor))
    if len(stages) > 1:
        inside = set(stages)
        links: dict[str, set[str]] = {s: set() for s in stages}
        for f in model.flows.values():
            if f.src in inside and f.dst in inside:
                links[f.src].add(f.dst)
                links[f.dst].add(f.src)
        seen, todo = {stages[0]}, [stages[0]]
        while todo:
            for n in links[todo.pop()]:
                if n not in seen:
                    seen.add(n)
                    todo.append(n)
        if seen != inside:
            missing = ", ".join(s for s in stages if s not in seen)
            diags.append(Diagnostic("DisconnectedRegion",
                                    f"event '{event.id}': {missing} not flow-connected to "
                                    f"the rest of the region", where, event.id))
    return sort_diagnostics(diags)


@dataclass(frozen=True)
class Chronology:
    events: tuple[str, ...]
    permitted: frozenset[tuple[str, str]] = frozenset()
    forbidden: frozenset[tuple[str, str]] = frozenset()

    def successors(self, event: str) -> list[str]:
        """Events that may directly follow ``event``.

        An event without declared permitted successors constrains nothing
        beyond its forbidden pairs.
        """
        allowed = [b for (a, b) in self.permitted if a == event]
        pool = allowed if allowed else list(self.events)
        return sorted({b for b in pool if (event, b) not in self.forbidden},
                      key=self.events.index)


def build_chronology(events: Sequence[str], decl: Optional[syn.ChronologyDecl]) -> Chronology:
    permitted, forbidden = set(), set()
    for e in (decl.edges if decl else ()):
        (forbidden if e.forbid else permitted).add((e.src, e.dst))
    return Chronology(tuple(events), frozenset(permitted), frozenset(forbidden))


def validate_chronology(chron: Chronology, decl: Optional[syn.ChronologyDecl] = None
                        ) -> list[Diagnostic]:
    diags = []
    spans = {(e.src, e.dst, e.forbid): e.span for e in (decl.edges if decl else ())}
    known = set(chron.events)
    for forbid, pairs in ((False, chron.permitted), (True, chron.forbidden)):
        for a, b in sorted(pairs):
            for name in (a, b):
                if name not in known:
                    diags.append(Diagnostic("UnknownEvent",
                                            f"chronology names undeclared event '{name}'",
                                            spans.get((a, b, forbid)), name))
    for a, b in sorted(chron.permitted & chron.forbidden):
        diags.append(Diagnostic("ContradictoryEdge", f"{a} -> {b} is both permitted and forbidden",
                                spans.get((a, b, True)), f"{a}->{b}"))
    return sort_diagnostics(diags)


@dataclass(frozen=True)
class Violation:
    index: int  # position of the second event of the offending pair
    previous: str
    next: str
    reason: str  # "forbidden" or "not-permitted"
    tick: Optional[int] = None

    def __str__(self) -> str:
        return f"{self.previous} -> {self.next} ({self.reason})"


def _ids(trace: Iterable[Union[Occurrence, tuple, str]]) -> list[tuple[str, Optional[int]]]:
    out = []
    for item in trace:
        if isinstance(item, str):
            out.append((item, None))
        else:
            out.append((item[0], item[1]))
    return out


def check_trace(chron: Chronology, trace: Iterable[Union[Occurrence, tuple, str]]
                ) -> list[Violation]:
    """One violation per adjacent pair that the chronology does not allow."""
    items = _ids(trace)
    known = set(chron.events)
    for name, _ in items:
        if name not in known:
            raise UnknownEvent(name)
    constrained = {a for (a, _) in chron.permitted}
    out = []
    for i in range(1, len(items)):
        a, b = items[i - 1][0], items[i][0]
        if (a, b) in chron.forbidden:
            out.append(Violation(i, a, b, "forbidden", items[i][1]))
        elif a in constrained and (a, b) not in chron.permitted:
            out.append(Violation(i, a, b, "not-permitted", items[i][1]))
    return out


def enumerate_traces(chron: Chronology, start: str, max_len: int) -> set[tuple[str, ...]]:
    """Every permitted event sequence beginning at ``start`` of length 1..max_len."""
    if max_len > MAX_ENUMERATION:
        raise LimitExceeded(f"max_len {max_len} exceeds {MAX_ENUMERATION}")
    if start not in chron.events:
        raise UnknownEvent(start)
    if max_len < 1:
        return set()
    out: set[tuple[str, ...]] = set()
    frontier = [(start,)]
    for _ in range(max_len):
        out.update(frontier)
        frontier = [t + (nxt,) for t in frontier for nxt in chron.successors(t[-1])]
    return out


def all_sequences(events: Sequence[str], max_len: int) -> Iterable[tuple[str, ...]]:
    """Every sequence over ``events`` of length 1..max_len, permitted or not."""
    for n in range(1, max_len + 1):
        yield from itertools.product(events, repeat=n)


def format_trace(trace: Trace) -> str:
    return "".join(f"{o.event}\t{o.tick}\n" for o in trace)


def parse_trace(text: str) -> list[Occurrence]:
    out: list[Occurrence] = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise TraceFormatError(f"line {n}: expected 'event<TAB>tick'")
        try:
            tick = int(parts[1])
        except ValueError:
            raise TraceFormatError(f"line {n}: tick {parts[1]!r} is not an integer") from None
        if out and tick < out[-1].tick:
            raise TraceFormatError(f"line {n}: tick {tick} goes back in time")
        out.append(Occurrence(parts[0].strip(), tick))
    return out


def read_trace(path: Union[str, Path]) -> list[Occurrence]:
    return parse_trace(Path(path).read_text(encoding="utf-8"))
