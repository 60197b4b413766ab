"""Deterministic discrete-event execution of a model.

One tick is one scheduler step.  Within a tick:

1. activations raised by triggers during the previous tick open gated stages;
2. tokens present at the start of the tick move one flow hop, in ascending
   token id, choosing among outgoing flows in declaration order;
3. the remaining activations mint tokens at their create stages;
4. injections scheduled for the tick mint tokens;
5. events are logged, in declaration order, for every token that fired an
   anchor after it or its ancestors passed the rest of the region;
6. control rules are polled and may raise warnings.

Triggers raised by arrivals during a tick take effect on the next tick.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Union

from .behavior import Chronology, Event, Occurrence, UnknownEvent, Violation, check_trace, region_stages
from .expr import EvaluationError, Ref, evaluate, holds, refs
from .model import Flow, Model, StageKind


class SimulationError(Exception):
    pass


class AttributeUnderflow(SimulationError):
    pass


class InjectionError(SimulationError, ValueError):
    pass


@dataclass(frozen=True)
class Injection:
    tick: int
    thing: str
    attrs: tuple[tuple[str, int], ...] = ()
    stage: Optional[str] = None  # a create stage; chosen by entry_stage() when unset


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0  # reserved: runs never draw random numbers
    max_ticks: int = 500
    injections: tuple[Injection, ...] = ()

    def __post_init__(self):
        if self.max_ticks < 1:
            raise ValueError("max_ticks must be at least 1")


@dataclass(frozen=True)
class ControlRule:
    id: str
    from_event: str
    to_event: str
    threshold: int
    message: str

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError(f"rule {self.id}: threshold must be at least 1")


@dataclass(frozen=True)
class ControlWarning:
    rule: str
    raised_at: int
    elapsed: int
    message: str


@dataclass(frozen=True)
class Token:
    id: int
    thing: str
    stage: str
    attrs: tuple[tuple[str, int], ...]
    born: int
    transit: Optional[str] = None  # flow being travelled
    arrives: Optional[int] = None
    # (event index, region element) pairs this token and its ancestors passed
    # since that event last occurred for them
    trail: frozenset[tuple[int, str]] = field(default=frozenset(), compare=False, repr=False)

    def get(self, name: str) -> int:
        for k, v in self.attrs:
            if k == name:
                return v
        raise EvaluationError(f"token {self.id} ({self.thing}) has no attribute '{name}'")


@dataclass(frozen=True)
class Retirement:
    tick: int
    token: int
    stage: str
    reason: str  # "reborn" at a create stage, "sink" at a sink transfer


class Activation(NamedTuple):
    trigger: str
    dst: str
    thing: str
    attrs: tuple[tuple[str, int], ...]
    trail: frozenset[tuple[int, str]] = frozenset()


@dataclass(frozen=True)
class SimState:
    tick: int = 0
    tokens: tuple[Token, ...] = ()
    pending: tuple[Activation, ...] = ()
    log: tuple[Occurrence, ...] = ()
    warnings: tuple[ControlWarning, ...] = ()
    stores: tuple[tuple[str, tuple[tuple[str, int], ...]], ...] = ()
    next_id: int = 1
    warned: frozenset[tuple[str, int]] = frozenset()
    retired: tuple[Retirement, ...] = ()
    fired: tuple[str, ...] = ()  # stages that fired during the last tick

    def store(self, thing: str) -> dict[str, int]:
        return dict(dict(self.stores).get(thing, ()))


class Elapsed(NamedTuple):
    ticks: int
    open: bool


def elapsed(trace: Sequence[Occurrence], from_event: str, to_event: str, now: int,
            events: Optional[Iterable[str]] = None) -> Optional[Elapsed]:
    """Ticks from the latest ``from_event`` to the first ``to_event`` after it.

    Open (``now`` minus the latest ``from_event``) when ``to_event`` has not
    followed yet; ``None`` when ``from_event`` never occurred.
    """
    if events is not None:
        known = set(events)
        for name in (from_event, to_event):
            if name not in known:
                raise UnknownEvent(name)
    start = _latest(trace, from_event)
    if start is None:
        return None
    return _elapsed_from(trace, start, to_event, now)


def _latest(trace: Sequence[Occurrence], event: str) -> Optional[int]:
    for i in range(len(trace) - 1, -1, -1):
        if trace[i].event == event:
            return i
    return None


def _elapsed_from(trace: Sequence[Occurrence], start: int, to_event: str, now: int) -> Elapsed:
    for occ in trace[start + 1:]:
        if occ.event == to_event:
            return Elapsed(occ.tick - trace[start].tick, False)
    return Elapsed(now - trace[start].tick, True)


def entry_stage(model: Model, thing: str) -> str:
    """Default create stage for injecting ``thing``."""
    creates = [s for s in model.stages.values() if s.kind is StageKind.CREATE]
    targeted = {t.dst for t in model.triggers.values()}

    def is_entry(s):
        return not model.incoming(s.id) and s.id not in targeted

    for pick in (lambda s: s.thing == thing and is_entry(s),
                 lambda s: s.thing == thing,
                 lambda s: s.thing is None and is_entry(s)):
        for s in creates:
            if pick(s):
                return s.id
    raise InjectionError(f"no create stage can take an injected '{thing}'")


def parse_injection(text: str, model: Optional[Model] = None) -> Injection:
    """Read ``"request current=0 requested=2 [at Stage.create[X]] [@tick]"``."""
    words = shlex.split(text)
    if not words:
        raise InjectionError("empty injection")
    thing, attrs, stage, tick = words[0], [], None, 0
    rest = iter(words[1:])
    for w in rest:
        if w == "at":
            stage = next(rest, None)
            if stage is None:
                raise InjectionError("'at' needs a stage")
        elif w.startswith("@"):
            try:
                tick = int(w[1:])
            except ValueError:
                raise InjectionError(f"bad tick {w!r}") from None
        elif "=" in w:
            k, _, v = w.partition("=")
            try:
                attrs.append((k, int(v)))
            except ValueError:
                raise InjectionError(f"attribute {k} needs an integer, got {v!r}") from None
        else:
            raise InjectionError(f"cannot read {w!r} in injection {text!r}")
    if tick < 0:
        raise InjectionError("injection tick must be nonnegative")
    if model is not None:
        if thing not in model.things:
            raise InjectionError(f"unknown thing '{thing}'")
        if stage is None:
            stage = entry_stage(model, thing)
        elif stage not in model.stages or model.stages[stage].kind is not StageKind.CREATE:
            raise InjectionError(f"'{stage}' is not a create stage")
    return Injection(tick, thing, tuple(attrs), stage)


@dataclass(frozen=True)
class SimResult:
    state: SimState
    trace: tuple[Occurrence, ...]
    warnings: tuple[ControlWarning, ...]
    violations: tuple[Violation, ...]
    quiescent: bool

    @property
    def nonquiescent_at_limit(self) -> bool:
        return not self.quiescent


class _Tick:
    """Mutable scratch space for one tick."""

    def __init__(self, sim: "Simulation", state: SimState, now: int):
        self.sim = sim
        self.model = sim.model
        self.now = now
        self.tokens: dict[int, Token] = {t.id: t for t in state.tokens}
        self.stores = {k: dict(v) for k, v in state.stores}
        self.next_id = state.next_id
        self.fired: list[str] = []
        self.hits: list[int] = []  # indexes of events that occurred
        self.pending: list[Activation] = []
        self.retired: list[Retirement] = list(state.retired)

    def lookup(self, token: Token):
        def get(ref: Ref) -> int:
            if ref.thing is not None:
                try:
                    return self.stores[ref.thing][ref.name]
                except KeyError:
                    raise EvaluationError(f"no store attribute '{ref.text}'") from None
            return token.get(ref.name)
        return get

    def choose(self, token: Token) -> Optional[Flow]:
        flows = self.model.outgoing(token.stage)
        look = self.lookup(token)

        def enters(f: Flow) -> bool:
            return holds(self.model.stages[f.dst].guard, look)

        for f in flows:
            if f.guard is not None and holds(f.guard, look) and enters(f):
                return f
        for f in flows:
            if f.guard is None and enters(f):
                return f
        return None

    def mint(self, thing: str, attrs: Mapping[str, int], stage: str,
             trail: frozenset[tuple[int, str]] = frozenset()) -> Token:
        schema = self.model.things[thing]
        values = schema.defaults()
        values.update((k, v) for k, v in attrs.items() if k in values)
        self.check_nonneg(thing, values)
        tok = Token(self.next_id, thing, stage, tuple(values.items()), self.now, trail=trail)
        self.next_id += 1
        return tok

    def check_nonneg(self, thing: str, values: Mapping[str, int], where: str = ""):
        schema = self.model.things[thing]
        for a in schema.attributes:
            if a.nonneg and values.get(a.name, 0) < 0:
                raise AttributeUnderflow(
                    f"tick {self.now}: {thing}.{a.name} = {values[a.name]} is negative{where}")

    def complete(self, token: Token, stage_id: str) -> Optional[Token]:
        """Run the stage on an arriving token; returns the token still alive there."""
        stage = self.model.stages[stage_id]
        self.fired.append(stage_id)
        if stage.actions:
            values = dict(token.attrs)
            for act in stage.actions:
                current = replace(token, attrs=tuple(values.items()))
                value = evaluate(act.value, self.lookup(current))
                target = act.target
                if target.thing is not None:
                    store = self.stores.get(target.thing)
                    if store is None or target.name not in store:
                        raise EvaluationError(f"no store attribute '{target.text}'")
                    store[target.name] = value
                    self.check_nonneg(target.thing, store, f" (store, at {stage_id})")
                else:
                    if target.name not in values:
                        raise EvaluationError(f"{token.thing} has no attribute '{target.name}'")
                    values[target.name] = value
            self.check_nonneg(token.thing, values, f" (at {stage_id})")
            token = replace(token, attrs=tuple(values.items()))
        token = self.occur(token, stage_id)
        for trig in self.model.triggers_from(stage_id):
            self.pending.append(Activation(trig.id, trig.dst, token.thing, token.attrs,
                                           token.trail))
        if stage.sink:
            self.retired.append(Retirement(self.now, token.id, stage_id, "sink"))
            return None
        return token

    def occur(self, token: Token, stage_id: str) -> Token:
        trail = token.trail | self.sim._marks.get(stage_id, frozenset())
        done = set()
        for index, rest in self.sim._anchored.get(stage_id, ()):
            if rest <= trail:
                self.hits.append(index)
                done.add(index)
        if done:
            trail = frozenset(m for m in trail if m[0] not in done)
        return replace(token, trail=trail)

    def arrive(self, token: Token, stage_id: str, via: str):
        stage = self.model.stages[stage_id]
        del self.tokens[token.id]
        token = replace(token, trail=token.trail | self.sim._marks.get(via, frozenset()))
        if stage.kind is StageKind.CREATE:
            # a thing flowing into a create stage is reborn as a new thing
            self.retired.append(Retirement(self.now, token.id, stage_id, "reborn"))
            token = self.mint(stage.thing or token.thing, dict(token.attrs), stage_id, token.trail)
        else:
            token = replace(token, stage=stage_id, transit=None, arrives=None)
        done = self.complete(token, stage_id)
        if done is not None:
            self.tokens[done.id] = done

    def create(self, thing: str, attrs: Mapping[str, int], stage_id: str,
               trail: frozenset[tuple[int, str]] = frozenset()):
        token = self.mint(thing, attrs, stage_id, trail)
        done = self.complete(token, stage_id)
        if done is not None:
            self.tokens[done.id] = done


class Simulation:
    """A model bundled with its events and control rules, ready to execute."""

    def __init__(self, model: Model, events: Sequence[Event] = (),
                 rules: Sequence[ControlRule] = (), config: SimConfig = SimConfig()):
        self.model = model
        self.events = tuple(events)
        self.rules = tuple(rules)
        self.config = config
        known = {e.id for e in self.events}
        for r in self.rules:
            for name in (r.from_event, r.to_event):
                if name not in known:
                    raise UnknownEvent(name)
        self.injections = tuple(sorted(
            (inj if inj.stage else replace(inj, stage=entry_stage(model, inj.thing))
             for inj in config.injections),
            key=lambda i: i.tick))
        for inj in self.injections:
            if inj.thing not in model.things:
                raise InjectionError(f"unknown thing '{inj.thing}'")
            stage = model.stages.get(inj.stage)
            if stage is None or stage.kind is not StageKind.CREATE:
                raise InjectionError(f"'{inj.stage}' is not a create stage")
            unknown = [k for k, _ in inj.attrs if model.things[inj.thing].attribute(k) is None]
            if unknown:
                raise InjectionError(f"'{inj.thing}' has no attribute {', '.join(unknown)}")
        # listed flows must be travelled too, not just their end stages fired
        self._anchored: dict[str, list[tuple[int, frozenset]]] = {}
        marks: dict[str, set[tuple[int, str]]] = {}
        for index, e in enumerate(self.events):
            region = set(region_stages(model, e)) | {i for i in e.region if i in model.flows}
            for x in region:
                marks.setdefault(x, set()).add((index, x))
            rest = frozenset((index, x) for x in region if x != e.anchor)
            self._anchored.setdefault(e.anchor, []).append((index, rest))
        self._marks = {x: frozenset(m) for x, m in marks.items()}
        self._shown_stores = sorted({r.thing for s in model.stages.values()
                                     for node in (s.guard, *s.actions)
                                     for r in refs(node) if r.thing}
                                    | {r.thing for f in model.flows.values()
                                       for r in refs(f.guard) if r.thing})

    def initial_state(self) -> SimState:
        stores = tuple((t.name, tuple(t.defaults().items())) for t in self.model.things.values())
        empty = SimState(stores=stores)
        return self._advance(empty, 0, move=False)

    def step(self, state: SimState) -> SimState:
        return self._advance(state, state.tick + 1, move=True)

    def _advance(self, state: SimState, now: int, move: bool) -> SimState:
        work = _Tick(self, state, now)
        model = self.model
        gates: dict[str, list[frozenset]] = {}
        mints: list[Activation] = []
        for act in state.pending:
            if model.stages[act.dst].kind is StageKind.CREATE:
                mints.append(act)
            else:
                gates.setdefault(act.dst, []).append(act.trail)

        if move:
            for tid in sorted(t.id for t in state.tokens):
                token = work.tokens.get(tid)
                if token is None:
                    continue
                if token.transit is not None:
                    if token.arrives <= now:
                        work.arrive(token, token.stage, token.transit)
                    continue
                gated = token.stage in model.gated_stages
                if gated and not gates.get(token.stage):
                    continue
                flow = work.choose(token)
                if flow is None:
                    continue
                if gated:
                    token = replace(token, trail=token.trail | gates[token.stage].pop(0))
                if flow.ticks <= 1:
                    work.arrive(token, flow.dst, flow.id)
                else:
                    work.tokens[tid] = replace(token, stage=flow.dst, transit=flow.id,
                                               arrives=now + flow.ticks - 1)

        for act in mints:
            dst = model.stages[act.dst]
            work.create(dst.thing or act.thing, dict(act.attrs), act.dst, act.trail)
        for inj in self.injections:
            if inj.tick == now:
                work.create(inj.thing, dict(inj.attrs), inj.stage)

        log = list(state.log)
        log.extend(Occurrence(self.events[i].id, now) for i in sorted(work.hits))

        warnings = list(state.warnings)
        warned = set(state.warned)
        for rule in self.rules:
            start = _latest(log, rule.from_event)
            if start is None or (rule.id, start) in warned:
                continue
            span = _elapsed_from(log, start, rule.to_event, now)
            if span.open and span.ticks > rule.threshold:
                warnings.append(ControlWarning(rule.id, now, span.ticks, rule.message))
                warned.add((rule.id, start))

        return SimState(
            tick=now,
            tokens=tuple(sorted(work.tokens.values(), key=lambda t: t.id)),
            pending=tuple(work.pending),
            log=tuple(log),
            warnings=tuple(warnings),
            stores=tuple((k, tuple(v.items())) for k, v in work.stores.items()),
            next_id=work.next_id,
            warned=frozenset(warned),
            retired=tuple(work.retired),
            fired=tuple(work.fired),
        )

    def movable(self, state: SimState) -> bool:
        work = _Tick(self, state, state.tick + 1)
        for t in state.tokens:
            if t.transit is not None:
                return True
            if t.stage in self.model.gated_stages:
                continue
            if work.choose(t) is not None:
                return True
        return False

    def quiescent(self, state: SimState) -> bool:
        """Nothing can move, nothing is pending, and no control timer is armed."""
        if state.pending or self.movable(state):
            return False
        if any(inj.tick > state.tick for inj in self.injections):
            return False
        for rule in self.rules:
            start = _latest(state.log, rule.from_event)
            if start is None or (rule.id, start) in state.warned:
                continue
            if _elapsed_from(state.log, start, rule.to_event, state.tick).open:
                return False
        return True

    def states(self) -> Iterator[SimState]:
        """Every state from tick 0 until quiescence or the tick limit."""
        state = self.initial_state()
        yield state
        while state.tick < self.config.max_ticks and not self.quiescent(state):
            state = self.step(state)
            yield state

    def run(self, chronology: Optional[Chronology] = None) -> SimResult:
        state = None
        for state in self.states():
            pass
        violations = tuple(check_trace(chronology, state.log)) if chronology else ()
        return SimResult(state, state.log, state.warnings, violations, self.quiescent(state))

    @property
    def shown_stores(self) -> list[str]:
        return self._shown_stores


def step(model: Model, state: SimState, events: Sequence[Event] = (),
         rules: Sequence[ControlRule] = ()) -> SimState:
    """Advance ``state`` by one tick."""
    return Simulation(model, events, rules).step(state)


def run(model: Model, events: Sequence[Event] = (), chronology: Optional[Chronology] = None,
        rules: Sequence[ControlRule] = (), config: SimConfig = SimConfig()) -> SimResult:
    return Simulation(model, events, rules, config).run(chronology)


def _attrs(pairs) -> str:
    return " ".join(f"{k}={v}" for k, v in pairs)


def format_report(result: SimResult, sim: Simulation) -> str:
    """Plain-text run report; every line tab-separated, ordering stable."""
    st = result.state
    out = ["STATUS", f"ticks\t{st.tick}",
           f"outcome\t{'quiescent' if result.quiescent else 'NonQuiescentAtLimit'}"]
    out.append("TOKENS")
    for t in st.tokens:
        moving = f"{t.transit}@{t.arrives}" if t.transit else "-"
        out.append(f"{t.id}\t{t.thing}\t{t.stage}\t{_attrs(t.attrs)}\t{moving}")
    out.append("RETIRED")
    for r in st.retired:
        out.append(f"{r.tick}\t{r.token}\t{r.stage}\t{r.reason}")
    out.append("STORES")
    stores = dict(st.stores)
    for name in sim.shown_stores:
        out.append(f"{name}\t{_attrs(stores[name])}")
    out.append("OCCURRENCES")
    out += [f"{o.event}\t{o.tick}" for o in result.trace]
    out.append("WARNINGS")
    out += [f"{w.rule}\t{w.raised_at}\t{w.elapsed}\t{w.message}" for w in result.warnings]
    out.append("VIOLATIONS")
    out += [f"{v.index}\t{v.previous}\t{v.next}\t{v.reason}" for v in result.violations]
    return "\n".join(out) + "\n"
