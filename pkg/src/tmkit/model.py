"""Static thinging-machine models: machines, stages, flows, triggers, things.

A model is built once from declarations and never mutated afterwards; every
transformation returns a new ``Model``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Union

from . import syntax as syn
from .expr import Assign, Predicate, refs


class StageKind(enum.Enum):
    CREATE = "create"
    PROCESS = "process"
    RELEASE = "release"
    TRANSFER = "transfer"
    RECEIVE = "receive"

    def __str__(self) -> str:
        return self.value


C, P, RL, T, RC = (StageKind.CREATE, StageKind.PROCESS, StageKind.RELEASE,
                   StageKind.TRANSFER, StageKind.RECEIVE)

# Permitted flows between two stages of the same machine.  Arrive and accept
# are folded into receive, so they do not appear.
ADJACENCY: frozenset[tuple[StageKind, StageKind]] = frozenset({
    (T, RC), (RC, P), (RC, RL), (P, RL), (P, C), (C, P), (C, RL), (RL, T),
})

# Stages dropped by simplification; flow direction stands in for them.
ELIDED_KINDS = frozenset({RL, T, RC})


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    span: Optional[syn.Span] = None
    subject: str = ""

    def sort_key(self):
        where = (self.span.line, self.span.column) if self.span else (0, 0)
        return (where, self.code, self.subject, self.message)

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        return f"{where}{self.code}: {self.message}"


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=Diagnostic.sort_key)


class BuildError(Exception):
    """Raised by ``build_model`` with every duplicate or dangling identifier."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = sort_diagnostics(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]


class UnknownStage(KeyError):
    pass


class UnknownMachine(KeyError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    nonneg: bool = False
    default: int = 0


@dataclass(frozen=True)
class ThingType:
    name: str
    home: str
    attributes: tuple[Attribute, ...] = ()
    span: Optional[syn.Span] = field(default=None, compare=False, repr=False)

    @property
    def id(self) -> str:
        return self.name

    def attribute(self, name: str) -> Optional[Attribute]:
        for a in self.attributes:
            if a.name == name:
                return a
        return None

    def defaults(self) -> dict[str, int]:
        return {a.name: a.default for a in self.attributes}


@dataclass(frozen=True)
class Machine:
    id: str
    parent: Optional[str]
    stages: tuple[str, ...] = ()
    submachines: tuple[str, ...] = ()
    things: tuple[str, ...] = ()
    span: Optional[syn.Span] = field(default=None, compare=False, repr=False)

    @property
    def name(self) -> str:
        return self.id


@dataclass(frozen=True)
class Stage:
    id: str
    owner: str
    kind: StageKind
    label: Optional[str] = None
    thing: Optional[str] = None
    sink: bool = False
    guard: Optional[Predicate] = None
    actions: tuple[Assign, ...] = ()
    span: Optional[syn.Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Flow:
    id: str
    src: str
    dst: str
    guard: Optional[Predicate] = None
    ticks: int = 1
    span: Optional[syn.Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Trigger:
    id: str
    src: str
    dst: str
    span: Optional[syn.Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Model:
    name: str
    machines: dict[str, Machine]
    stages: dict[str, Stage]
    flows: dict[str, Flow]
    triggers: dict[str, Trigger]
    things: dict[str, ThingType]

    @property
    def root(self) -> str:
        return self.name

    @cached_property
    def _outgoing(self) -> dict[str, tuple[Flow, ...]]:
        out: dict[str, list[Flow]] = {s: [] for s in self.stages}
        for f in self.flows.values():
            out.setdefault(f.src, []).append(f)
        return {s: tuple(fs) for s, fs in out.items()}

    @cached_property
    def _incoming(self) -> dict[str, tuple[Flow, ...]]:
        inc: dict[str, list[Flow]] = {s: [] for s in self.stages}
        for f in self.flows.values():
            inc.setdefault(f.dst, []).append(f)
        return {s: tuple(fs) for s, fs in inc.items()}

    def outgoing(self, stage: str) -> tuple[Flow, ...]:
        return self._outgoing.get(stage, ())

    def incoming(self, stage: str) -> tuple[Flow, ...]:
        return self._incoming.get(stage, ())

    def triggers_from(self, stage: str) -> tuple[Trigger, ...]:
        return tuple(t for t in self.triggers.values() if t.src == stage)

    @cached_property
    def gated_stages(self) -> frozenset[str]:
        """Non-create stages targeted by a trigger; tokens there wait for activation."""
        return frozenset(
            t.dst for t in self.triggers.values()
            if t.dst in self.stages and self.stages[t.dst].kind is not C
        )

    @property
    def is_simplified(self) -> bool:
        """True when no release, transfer or receive stage is present."""
        return all(s.kind not in ELIDED_KINDS for s in self.stages.values())

    def subtree(self, machine: str) -> list[str]:
        if machine not in self.machines:
            raise UnknownMachine(machine)
        out, todo = [], [machine]
        while todo:
            m = todo.pop(0)
            out.append(m)
            todo.extend(self.machines[m].submachines)
        return out

    def stages_within(self, machine: str) -> list[str]:
        """Stages owned by ``machine`` or any of its submachines."""
        inside = set(self.subtree(machine))
        return [s.id for s in self.stages.values() if s.owner in inside]


Declarations = Union[syn.ModelDecl, syn.Ast, Iterable[syn.ModelItem]]


def build_model(declarations: Declarations, name: str = "Model") -> Model:
    """Resolve declarations into a ``Model``.

    Accepts a parsed file, a ``model`` block, or a bare list of model items.
    Raises ``BuildError`` listing every duplicate or unresolved identifier.
    """
    if isinstance(declarations, syn.Ast):
        declarations = declarations.model
    if isinstance(declarations, syn.ModelDecl):
        name, items, root_span = declarations.name, declarations.items, declarations.span
    else:
        items, root_span = tuple(declarations), None

    diags: list[Diagnostic] = []
    machines: dict[str, Machine] = {}
    stages: dict[str, Stage] = {}
    things: dict[str, ThingType] = {}
    arcs: list[Union[syn.FlowDecl, syn.TriggerDecl]] = []

    def dup(kind: str, ident: str, span):
        diags.append(Diagnostic("DuplicateId", f"duplicate {kind} '{ident}'", span, ident))

    def add_thing(decl: syn.ThingDecl, home: str) -> Optional[str]:
        if decl.name in things:
            dup("thing", decl.name, decl.span)
            return None
        seen = set()
        for a in decl.attrs:
            if a.name in seen:
                dup("attribute", f"{decl.name}.{a.name}", a.span)
            seen.add(a.name)
        things[decl.name] = ThingType(
            decl.name, home,
            tuple(Attribute(a.name, a.nonneg, a.default) for a in decl.attrs),
            decl.span)
        return decl.name

    def add_machine(mid: str, parent: Optional[str], body, span) -> Optional[str]:
        if mid in machines:
            dup("machine", mid, span)
            return None
        machines[mid] = Machine(mid, parent, span=span)  # placeholder keeps the name taken
        own_stages, subs, own_things = [], [], []
        for item in body:
            if isinstance(item, syn.StageDecl):
                sid = syn.stage_id(mid, item.kind, item.label)
                if sid in stages:
                    dup("stage", sid, item.span)
                    continue
                stages[sid] = Stage(sid, mid, StageKind(item.kind), item.label, item.thing,
                                    item.sink, item.guard, tuple(item.actions), item.span)
                own_stages.append(sid)
            elif isinstance(item, syn.MachineDecl):
                sub = add_machine(item.name, mid, item.items, item.span)
                if sub is not None:
                    subs.append(sub)
            elif isinstance(item, syn.ThingDecl):
                t = add_thing(item, mid)
                if t is not None:
                    own_things.append(t)
            elif isinstance(item, (syn.FlowDecl, syn.TriggerDecl)):
                arcs.append(item)
            else:
                raise TypeError(f"unexpected declaration {item!r}")
        machines[mid] = Machine(mid, parent, tuple(own_stages), tuple(subs),
                                tuple(own_things), span)
        return mid

    add_machine(name, None, items, root_span)

    flows: dict[str, Flow] = {}
    triggers: dict[str, Trigger] = {}
    for arc in arcs:
        if arc.name in flows or arc.name in triggers:
            dup("flow" if isinstance(arc, syn.FlowDecl) else "trigger", arc.name, arc.span)
            continue
        ok = True
        for ref in (arc.src, arc.dst):
            if ref.id not in stages:
                diags.append(Diagnostic("UnresolvedReference",
                                        f"'{arc.name}' refers to unknown stage '{ref.id}'",
                                        ref.span or arc.span, ref.id))
                ok = False
        if not ok:
            continue
        if isinstance(arc, syn.FlowDecl):
            flows[arc.name] = Flow(arc.name, arc.src.id, arc.dst.id, arc.guard, arc.ticks, arc.span)
        else:
            triggers[arc.name] = Trigger(arc.name, arc.src.id, arc.dst.id, arc.span)

    for s in stages.values():
        if s.thing is not None and s.thing not in things:
            diags.append(Diagnostic("UnresolvedReference",
                                    f"stage '{s.id}' makes unknown thing '{s.thing}'",
                                    s.span, s.thing))
    if diags:
        raise BuildError(diags)
    return Model(name, machines, stages, flows, triggers, things)


def reachable_stages(model: Model, start: str) -> set[str]:
    """Forward closure of ``start`` over flows (triggers move nothing)."""
    if start not in model.stages:
        raise UnknownStage(start)
    seen = {start}
    todo = deque([start])
    while todo:
        for f in model.outgoing(todo.popleft()):
            if f.dst not in seen:
                seen.add(f.dst)
                todo.append(f.dst)
    return seen


def thing_types_at(model: Model) -> dict[str, Optional[frozenset[str]]]:
    """Thing types that may occupy each stage; ``None`` means unconstrained.

    Typed create stages fix the type of what they make; everything else
    inherits the types of its flow predecessors.  A create stage nothing
    flows into can receive injections of any type.
    """
    types: dict[str, Optional[frozenset[str]]] = {}
    for s in model.stages.values():
        if s.kind is C and s.thing is not None:
            types[s.id] = frozenset({s.thing})
        elif s.kind is C and not model.incoming(s.id) and not any(
                t.dst == s.id for t in model.triggers.values()):
            types[s.id] = None
        else:
            types[s.id] = frozenset()
    changed = True
    while changed:
        changed = False
        for s in model.stages.values():
            if s.kind is C and s.thing is not None:
                continue
            cur = types[s.id]
            if cur is None:
                continue
            new = set(cur)
            sources = [f.src for f in model.incoming(s.id)]
            if s.kind is C:
                sources += [t.src for t in model.triggers.values() if t.dst == s.id]
            unknown = False
            for src in sources:
                if src not in types:
                    continue
                if types[src] is None:
                    unknown = True
                    break
                new |= types[src]
            if unknown:
                types[s.id] = None
                changed = True
            elif new != cur:
                types[s.id] = frozenset(new)
                changed = True
    return types


def validate(model: Model) -> list[Diagnostic]:
    """Return every well-formedness problem of ``model``, sorted by location."""
    diags: list[Diagnostic] = []
    diags += _check_containment(model)
    simplified = model.is_simplified

    for s in model.stages.values():
        if s.owner not in model.machines:
            diags.append(Diagnostic("UnresolvedReference",
                                    f"stage '{s.id}' has unknown owner '{s.owner}'", s.span, s.id))
        if s.actions and s.kind not in (C, P):
            diags.append(Diagnostic("BadAction",
                                    f"'{s.id}': only create and process stages may act",
                                    s.span, s.id))
        if s.sink and s.kind is not T:
            diags.append(Diagnostic("BadSink", f"'{s.id}': only transfer stages can be sinks",
                                    s.span, s.id))
        if s.thing is not None and s.kind is not C:
            diags.append(Diagnostic("BadThing", f"'{s.id}': only create stages make things",
                                    s.span, s.id))

    for f in model.flows.values():
        if f.src not in model.stages or f.dst not in model.stages:
            diags.append(Diagnostic("UnresolvedReference", f"flow '{f.id}' has a dangling end",
                                    f.span, f.id))
            continue
        a, b = model.stages[f.src], model.stages[f.dst]
        if f.ticks < 1:
            diags.append(Diagnostic("BadTicks", f"flow '{f.id}' must take at least one tick",
                                    f.span, f.id))
        if simplified:
            continue
        if a.owner != b.owner:
            if (a.kind, b.kind) != (T, T):
                diags.append(Diagnostic(
                    "BoundaryViolation",
                    f"flow '{f.id}' crosses machines {a.owner}->{b.owner} "
                    f"as {a.kind}->{b.kind}; only transfer->transfer may",
                    f.span, f.id))
        elif (a.kind, b.kind) not in ADJACENCY:
            diags.append(Diagnostic("BadAdjacency",
                                    f"flow '{f.id}': {a.kind}->{b.kind} is not a stage wiring",
                                    f.span, f.id))

    for t in model.triggers.values():
        if t.src not in model.stages or t.dst not in model.stages:
            diags.append(Diagnostic("UnresolvedReference",
                                    f"trigger '{t.id}' has a dangling end", t.span, t.id))
            continue
        if t.src == t.dst:
            diags.append(Diagnostic("BadTrigger", f"trigger '{t.id}' activates its own source",
                                    t.span, t.id))
        elif model.stages[t.dst].kind is not C and not model.outgoing(t.dst):
            diags.append(Diagnostic(
                "BadTrigger",
                f"trigger '{t.id}' targets '{t.dst}', which neither creates nor starts a flow",
                t.span, t.id))

    diags += _check_attributes(model)
    return sort_diagnostics(diags)


def _check_containment(model: Model) -> list[Diagnostic]:
    diags = []
    roots = [m.id for m in model.machines.values() if m.parent is None]
    if roots != [model.root]:
        diags.append(Diagnostic("ContainmentRoot",
                                f"expected the single root '{model.root}', found {roots}",
                                None, model.root))
    for m in model.machines.values():
        seen, cur = {m.id}, m.parent
        while cur is not None:
            if cur not in model.machines:
                diags.append(Diagnostic("UnresolvedReference",
                                        f"machine '{m.id}' has unknown parent '{cur}'",
                                        m.span, m.id))
                break
            if cur in seen:
                diags.append(Diagnostic("ContainmentCycle",
                                        f"machine '{m.id}' is inside itself", m.span, m.id))
                break
            seen.add(cur)
            cur = model.machines[cur].parent
        for sub in m.submachines:
            if sub in model.machines and model.machines[sub].parent != m.id:
                diags.append(Diagnostic("ContainmentCycle",
                                        f"machine '{sub}' listed under '{m.id}' "
                                        f"but parented elsewhere", m.span, sub))
    return diags


def _check_attributes(model: Model) -> list[Diagnostic]:
    diags = []
    types = thing_types_at(model)

    def names(stage_id: str) -> Optional[set[str]]:
        ts = types.get(stage_id)
        if ts is None or not ts:
            return None
        return {a.name for t in ts for a in model.things[t].attributes}

    def check(node, visible: Optional[set[str]], where: str, span):
        for r in refs(node):
            if r.thing is not None:
                thing = model.things.get(r.thing)
                if thing is None or thing.attribute(r.name) is None:
                    diags.append(Diagnostic("UndeclaredAttribute",
                                            f"{where}: no store attribute '{r.text}'", span, r.text))
                continue
            pool = visible if visible is not None else {
                a.name for t in model.things.values() for a in t.attributes}
            if r.name not in pool:
                diags.append(Diagnostic("UndeclaredAttribute",
                                        f"{where}: '{r.name}' is not an attribute of the things "
                                        f"that reach it", span, r.name))

    for s in model.stages.values():
        inbound: Optional[set[str]] = set()
        srcs = [f.src for f in model.incoming(s.id)]
        for src in srcs:
            n = names(src)
            if n is None:
                inbound = None
                break
            inbound |= n
        if inbound is not None and not inbound:
            inbound = None
        if s.guard is not None:
            check(s.guard, inbound, f"guard of '{s.id}'", s.span)
        for a in s.actions:
            check(a, names(s.id), f"action of '{s.id}'", s.span)
    for f in model.flows.values():
        if f.guard is not None and f.src in model.stages:
            check(f.guard, names(f.src), f"guard of flow '{f.id}'", f.span)
    return diags


def model_to_decl(model: Model) -> syn.ModelDecl:
    """Rebuild declarations for ``model`` (canonical order: things, stages, machines)."""

    def ref(sid: str) -> syn.StageRef:
        s = model.stages[sid]
        return syn.StageRef(s.owner, s.kind.value, s.label)

    def thing_decl(tid: str) -> syn.ThingDecl:
        t = model.things[tid]
        return syn.ThingDecl(t.name, tuple(syn.AttrDecl(a.name, a.nonneg, a.default)
                                           for a in t.attributes))

    def machine_items(mid: str) -> tuple:
        m = model.machines[mid]
        items: list = [thing_decl(t) for t in m.things]
        for sid in m.stages:
            s = model.stages[sid]
            items.append(syn.StageDecl(s.kind.value, s.label, s.thing, s.sink, s.guard, s.actions))
        for sub in m.submachines:
            items.append(syn.MachineDecl(sub, machine_items(sub)))
        return tuple(items)

    root = model.machines[model.root]
    items: list = [thing_decl(t) for t in root.things]
    items += [syn.MachineDecl(sub, machine_items(sub)) for sub in root.submachines]
    items += [syn.FlowDecl(f.id, ref(f.src), ref(f.dst), f.guard, f.ticks)
              for f in model.flows.values()]
    items += [syn.TriggerDecl(t.id, ref(t.src), ref(t.dst)) for t in model.triggers.values()]
    return syn.ModelDecl(model.name, tuple(items))
