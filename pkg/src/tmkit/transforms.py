"""Derived views of a model: simplified form, DOT diagram, class skeleton."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import syntax as syn
from .behavior import Event, region_stages
from .expr import conjoin
from .model import ELIDED_KINDS, Flow, Machine, Model, StageKind, Trigger, UnknownMachine, model_to_decl


class AmbiguousSplice(ValueError):
    def __init__(self, chain: Sequence[str], at: str):
        self.chain = tuple(chain)
        self.at = at
        super().__init__(f"cannot splice {' -> '.join(chain)}: '{at}' branches")


def _survives(model: Model, sid: str) -> bool:
    return model.stages[sid].kind not in ELIDED_KINDS


def _splice(model: Model, first: Flow) -> Optional[Flow]:
    guards = [first.guard]
    ids = [first.id]
    ticks = first.ticks
    cur = first.dst
    seen = set()
    while not _survives(model, cur):
        stage = model.stages[cur]
        if cur in seen or stage.sink:
            return None
        seen.add(cur)
        outs = model.outgoing(cur)
        if not outs:
            return None
        if len(outs) > 1:
            raise AmbiguousSplice([model.flows[i].src for i in ids] + [cur], cur)
        nxt = outs[0]
        guards += [stage.guard, nxt.guard]
        ids.append(nxt.id)
        ticks += nxt.ticks
        cur = nxt.dst
    return Flow("__".join(ids), first.src, cur, conjoin(*guards), ticks)


def _upstream(model: Model, sid: str) -> list[str]:
    """Nearest surviving stages that reach ``sid`` through elided stages only."""
    if _survives(model, sid):
        return [sid]
    found: list[str] = []
    frontier, seen = [sid], {sid}
    while frontier and not found:
        nxt = []
        for s in frontier:
            for f in model.incoming(s):
                if f.src in seen:
                    continue
                seen.add(f.src)
                if _survives(model, f.src):
                    found.append(f.src)
                else:
                    nxt.append(f.src)
        frontier = nxt
    return [s for s in model.stages if s in found]


def simplify(model: Model) -> Model:
    """Drop release, transfer and receive stages; flow direction carries them.

    Each chain create/process -> (elided)* -> create/process becomes one flow
    whose guard conjoins the chain's guards and whose travel time is the
    chain's total, so occurrence ticks at surviving stages are unchanged.
    """
    flows: dict[str, Flow] = {}
    for f in model.flows.values():
        if _survives(model, f.src):
            spliced = _splice(model, f)
            if spliced is not None:
                flows[spliced.id] = spliced

    triggers: dict[str, Trigger] = {}
    for t in model.triggers.values():
        pairs = [(a, b) for a in _upstream(model, t.src) for b in _upstream(model, t.dst) if a != b]
        for k, (a, b) in enumerate(pairs, 1):
            tid = t.id if len(pairs) == 1 else f"{t.id}_{k}"
            triggers[tid] = Trigger(tid, a, b)

    stages = {k: s for k, s in model.stages.items() if _survives(model, k)}
    machines = {k: Machine(m.id, m.parent, tuple(s for s in m.stages if s in stages),
                           m.submachines, m.things)
                for k, m in model.machines.items()}
    return Model(model.name, machines, stages, flows, triggers, dict(model.things))


def restrict_events(original: Model, simplified: Model, events: Sequence[Event]) -> list[Event]:
    """Events of ``original`` whose anchor survives, regions cut to surviving stages."""
    out = []
    for e in events:
        if e.anchor not in simplified.stages:
            continue
        # compare chains link by link, so already spliced flows keep matching
        listed = {part for i in e.region if i in original.flows for part in i.split("__")}
        region = [s for s in region_stages(original, e) if s in simplified.stages]
        # a spliced flow stands for its chain when the whole chain was listed
        region += [f for f in simplified.flows if listed and set(f.split("__")) <= listed]
        out.append(Event(e.id, e.description, tuple(region), e.anchor, e.span))
    return out


def simplify_ast(ast: syn.Ast, model: Model, events: Sequence[Event]) -> syn.Ast:
    """Whole-file simplification: model, surviving events, their chronology and rules."""
    simple = simplify(model)
    kept = restrict_events(model, simple, events)
    names = {e.id for e in kept}

    def ref(sid: str) -> syn.StageRef:
        s = simple.stages[sid]
        return syn.StageRef(s.owner, s.kind.value, s.label)

    event_decls = tuple(syn.EventDecl(e.id, e.description,
                                      tuple(ref(i) if i in simple.stages else i for i in e.region),
                                      ref(e.anchor)) for e in kept)
    chron = None
    if ast.chronology is not None:
        chron = syn.ChronologyDecl(tuple(
            syn.ChronEdge(c.src, c.dst, c.forbid) for c in ast.chronology.edges
            if c.src in names and c.dst in names))
    controls = tuple(c for c in ast.controls if c.from_event in names and c.to_event in names)
    return syn.Ast(model_to_decl(simple), event_decls, chron, controls)


# DOT

_PALETTE = ("#fde68a", "#bfdbfe", "#bbf7d0", "#fecaca", "#ddd6fe", "#fbcfe8",
            "#a5f3fc", "#fed7aa", "#d9f99d", "#e5e7eb")


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _clustered(model: Model, mid: str) -> bool:
    m = model.machines[mid]
    return bool(m.stages) or not m.submachines


def to_dot(model: Model, events: Sequence[Event] = ()) -> str:
    """DOT digraph: machines as clusters, flows solid, triggers dashed.

    Machines that own stages, and leaf machines, are drawn as clusters; pure
    containers are not.  With ``events`` each region is tinted its own color.
    """
    tint: dict[str, str] = {}
    member: dict[str, list[str]] = {}
    for i, e in enumerate(events):
        for s in region_stages(model, e):
            tint.setdefault(s, _PALETTE[i % len(_PALETTE)])
            member.setdefault(s, []).append(e.id)

    lines = [f"digraph {_q(model.name)} {{", "  compound=true;", "  rankdir=LR;",
             "  node [shape=box, style=rounded];"]

    def node(sid: str, indent: str):
        s = model.stages[sid]
        label = s.kind.value + (f"\n{s.label}" if s.label is not None else "")
        attrs = [f"label={_q(label)}"]
        if sid in tint:
            attrs += ['style="rounded,filled"', f"fillcolor={_q(tint[sid])}",
                      f"xlabel={_q(','.join(member[sid]))}"]
        lines.append(f"{indent}{_q(sid)} [{', '.join(attrs)}];")

    def machine(mid: str, indent: str):
        m = model.machines[mid]
        inner = indent
        if _clustered(model, mid):
            lines.append(f"{indent}subgraph {_q('cluster_' + mid)} {{")
            lines.append(f"{indent}  label={_q(mid)};")
            inner = indent + "  "
        for sid in m.stages:
            node(sid, inner)
        for sub in m.submachines:
            machine(sub, inner)
        if _clustered(model, mid):
            lines.append(f"{indent}}}")

    machine(model.root, "  ")
    for f in model.flows.values():
        lines.append(f"  {_q(f.src)} -> {_q(f.dst)} [label={_q(f.id)}];")
    for t in model.triggers.values():
        lines.append(f"  {_q(t.src)} -> {_q(t.dst)} [label={_q(t.id)}, style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# class notation

@dataclass(frozen=True)
class ClassSkeleton:
    name: str
    attributes: tuple[tuple[str, str], ...] = ()  # (thing type, "created" | "stored")
    operations: tuple[str, ...] = ()
    descriptions: tuple[str, ...] = ()  # one per operation


def to_class(model: Model, machine: str, events: Sequence[Event] = ()) -> ClassSkeleton:
    """Class entries for ``machine``: its things become attributes, the events
    touching it become operations."""
    if machine not in model.machines:
        raise UnknownMachine(machine)
    inside = set(model.subtree(machine))
    stages = set(model.stages_within(machine))
    created = {s.thing for s in model.stages.values()
               if s.id in stages and s.kind is StageKind.CREATE and s.thing}
    attributes = []
    for t in model.things.values():
        if t.name in created:
            attributes.append((t.name, "created"))
        elif t.home in inside:
            attributes.append((t.name, "stored"))
    ops = [e for e in events if stages.intersection(region_stages(model, e))]
    return ClassSkeleton(machine, tuple(attributes), tuple(e.id for e in ops),
                         tuple(e.description for e in ops))


def format_class(skel: ClassSkeleton, tsv: bool = False) -> str:
    if tsv:
        rows = [f"class\t{skel.name}"]
        rows += [f"attribute\t{n}\t{k}" for n, k in skel.attributes]
        rows += [f"operation\t{o}\t{d}" for o, d in zip(skel.operations, skel.descriptions)]
        return "\n".join(rows) + "\n"
    rows = [f"class {skel.name}", "  attributes:"]
    rows += [f"    {n}: {k}" for n, k in skel.attributes]
    rows.append("  operations:")
    rows += [f"    {o}()  # {d}" for o, d in zip(skel.operations, skel.descriptions)]
    return "\n".join(rows) + "\n"
