import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fixture, helpdesk_with_hold, simulate, token_at
from strategies import valid_models
from tmkit.behavior import Occurrence, UnknownEvent
from tmkit.dsl import parse
from tmkit.model import StageKind, build_model
from tmkit.project import from_ast
from tmkit.simulator import (AttributeUnderflow, ControlRule, Injection, InjectionError, SimConfig,
                             Simulation, elapsed, format_report, parse_injection, run, step)


@pytest.fixture(scope="module")
def desk():
    return fixture("helpdesk.tm")


def project(text):
    return from_ast(parse(text))


# single steps

def test_release_moves_to_transfer_in_one_tick():
    p = project("""model M { thing t
        machine A { create of t release transfer }
        flow f: A.create -> A.release
        flow g: A.release -> A.transfer }""")
    sim = Simulation(p.model, config=SimConfig(injections=(Injection(0, "t", (), "A.create"),)))
    s0 = sim.initial_state()
    s1 = sim.step(s0)
    s2 = step(p.model, s1)
    assert [t.stage for t in s1.tokens] == ["A.release"]
    assert [t.stage for t in s2.tokens] == ["A.transfer"] and s2.tick == s1.tick + 1


def test_remaining_is_current_minus_requested(desk):
    _, result = simulate(desk, "request current=5 requested=3")
    (tok,) = result.state.tokens
    assert dict(tok.attrs)["remaining"] == 2


def test_short_branch_mints_pending_request(desk):
    _, result = simulate(desk, "request current=3 requested=6")
    (parked,) = token_at(result.state, "PendingRequests.process[37]")
    assert dict(parked.attrs)["requested"] == 3
    (delivered,) = token_at(result.state, "User.process[48]")
    assert dict(delivered.attrs)["pending"] == 3 and dict(delivered.attrs)["remaining"] == -3


def test_full_delivery_run(desk):
    _, result = simulate(desk, "request current=5 requested=3")
    names = [o.event for o in result.trace]
    assert names[names.index("E5"):] == ["E5", "E6", "E7", "E8"]
    assert not token_at(result.state, "PendingRequests.process[37]")
    assert result.quiescent and result.violations == ()


def test_empty_inventory_parks_request(desk):
    sim, result = simulate(desk, "request current=0 requested=2")
    assert result.state.store("pending_count") == {"value": 1}
    assert len(token_at(result.state, "PendingRequests.process[37]")) == 1
    assert "pending_count\tvalue=1" in format_report(result, sim)


def test_schedule_releases_one_pending_request(desk):
    _, result = simulate(desk, "request current=0 requested=2", "request current=0 requested=4 @1",
                         "schedule @30")
    assert len(token_at(result.state, "PendingRequests.process[37]")) == 1
    assert result.state.store("ordered_total") == {"value": 2}  # the older request goes first


def test_process_keeps_identity(desk):
    sim = Simulation(desk.model, desk.events, config=SimConfig(
        injections=(parse_injection("request current=5 requested=3", desk.model),)))
    seen = {}
    for state in sim.states():
        for t in state.tokens:
            seen.setdefault(t.id, set()).add(t.stage)
    # one id walks create[40] -> process[43] -> ... -> User.process[48]
    (walker,) = [i for i, stages in seen.items() if "Inventory.create[40]" in stages]
    assert {"Inventory.process[43]", "Storage.process[47]", "User.process[48]"} <= seen[walker]


def test_guard_with_no_enabled_flow_waits():
    p = project("""model M { thing t { x }
        machine A { create of t process }
        flow f: A.create -> A.process when x > 0 }""")
    _, result = simulate(p, "t x=0", max_ticks=5)
    assert [t.stage for t in result.state.tokens] == ["A.create"]
    assert result.quiescent


def test_unguarded_flow_is_the_default():
    p = project("""model M { thing t { x }
        machine A { create of t process[D] process[G] }
        flow d: A.create -> A.process[D]
        flow g: A.create -> A.process[G] when x = 1 }""")
    for x, where in ((1, "A.process[G]"), (0, "A.process[D]")):
        _, result = simulate(p, f"t x={x}")
        assert [t.stage for t in result.state.tokens] == [where]


def test_stage_guard_blocks_entry():
    p = project("""model M { thing t { x }
        machine A { create of t process guard x > 5 }
        flow f: A.create -> A.process }""")
    _, result = simulate(p, "t x=1")
    assert [t.stage for t in result.state.tokens] == ["A.create"]


def test_underflow_on_nat_attribute():
    p = project("""model M { thing t { x: nat = 1 }
        machine A { create of t process do x := x - 5 }
        flow f: A.create -> A.process }""")
    with pytest.raises(AttributeUnderflow):
        simulate(p, "t")


def test_trigger_into_create_copies_attributes():
    p = project("""model M { thing t { x } thing u { x }
        machine A { create of t process create[B] of u }
        flow f: A.create -> A.process
        trigger k: A.process ~> A.create[B] }""")
    _, result = simulate(p, "t x=7")
    made = token_at(result.state, "A.create[B]")
    assert [(t.thing, dict(t.attrs)) for t in made] == [("u", {"x": 7})]


def test_sink_despawns_and_logs():
    p = project("""model M { thing t
        machine A { create of t release transfer sink }
        flow f: A.create -> A.release
        flow g: A.release -> A.transfer }""")
    _, result = simulate(p, "t")
    assert result.state.tokens == ()
    (r,) = result.state.retired
    assert (r.token, r.stage, r.reason, r.tick) == (1, "A.transfer", "sink", 2)


def test_flow_travel_time():
    p = project("""model M { thing t
        machine A { create of t process }
        flow f: A.create -> A.process after 4 }
        event E "arrive" { region: A.process }""")
    _, result = simulate(p, "t")
    assert result.trace == (Occurrence("E", 4),)


def test_non_quiescent_at_limit():
    p = project("""model M { thing t
        machine A { create of t process }
        flow f: A.create -> A.process
        flow g: A.process -> A.create }""")
    _, result = simulate(p, "t", max_ticks=10)
    assert not result.quiescent and result.nonquiescent_at_limit
    assert result.state.tick == 10


def test_injection_parsing(desk):
    inj = parse_injection("request current=0 requested=2 @4", desk.model)
    assert inj == Injection(4, "request", (("current", 0), ("requested", 2)), "User.create[0]")
    assert parse_injection("schedule", desk.model).stage == "PendingRequests.create[52]"
    for bad in ("", "nothing", "request current=x", "request at Storage.process[47]",
                "request @-1", "request bogus"):
        with pytest.raises(InjectionError):
            parse_injection(bad, desk.model)


def test_injection_with_unknown_attribute(desk):
    with pytest.raises(InjectionError):
        Simulation(desk.model, config=SimConfig(injections=(Injection(0, "request", (("nope", 1),)),)))


def test_config_bounds():
    with pytest.raises(ValueError):
        SimConfig(max_ticks=0)
    with pytest.raises(ValueError):
        ControlRule("r", "A", "B", 0, "m")


def test_rule_with_unknown_event(desk):
    with pytest.raises(UnknownEvent):
        Simulation(desk.model, desk.events, (ControlRule("r", "E1", "E99", 5, "m"),))


# elapsed

def test_elapsed_closed():
    assert elapsed([Occurrence("E14", 2), Occurrence("E19", 6)], "E14", "E19", 10) == (4, False)


def test_elapsed_never_started():
    assert elapsed([Occurrence("E19", 6)], "E14", "E19", 10) is None


def test_elapsed_open():
    assert elapsed([Occurrence("E14", 2)], "E14", "E19", 9) == (7, True)


def test_elapsed_uses_latest_start():
    trace = [Occurrence("A", 1), Occurrence("B", 3), Occurrence("A", 5)]
    assert elapsed(trace, "A", "B", 8) == (3, True)


def test_elapsed_unknown_event():
    with pytest.raises(UnknownEvent):
        elapsed([], "A", "Z", 0, events=["A", "B"])


# control

ORDER = ("request current=0 requested=2", "schedule @20")


def test_late_supplier_order_warns_once():
    p = helpdesk_with_hold(10)
    rule = ControlRule("r", "E14", "E19", 5, "late")
    _, result = simulate(p, *ORDER, rules=(rule,))
    (w,) = result.warnings
    assert w.elapsed > 5 and w.rule == "r"


def test_fixture_rules_with_short_and_long_hold():
    _, quick = simulate(helpdesk_with_hold(3), *ORDER)
    _, slow = simulate(helpdesk_with_hold(10), *ORDER)
    assert quick.warnings == ()
    assert [(w.rule, w.elapsed) for w in slow.warnings] == [("r1", 6)]


def test_warning_only_while_interval_open():
    p = helpdesk_with_hold(10)
    _, result = simulate(p, *ORDER)
    (w,) = result.warnings
    log = dict((o.event, o.tick) for o in result.trace)
    assert log["E15"] < w.raised_at < log["E19"]


# invariants

def test_determinism(desk):
    reports = []
    for _ in range(2):
        sim, result = simulate(desk, "request current=3 requested=7", *ORDER)
        reports.append(format_report(result, sim))
    assert reports[0] == reports[1]


def test_occurrence_ticks_nondecreasing(desk):
    _, result = simulate(desk, "request current=3 requested=7", *ORDER)
    ticks = [o.tick for o in result.trace]
    assert ticks == sorted(ticks)


@settings(max_examples=150, deadline=None)
@given(valid_models(max_stages=8), st.data())
def test_conservation(model, data):
    creates = [s for s in model.stages.values() if s.kind is StageKind.CREATE]
    injections = tuple(Injection(data.draw(st.integers(0, 3)), "thing",
                                 (("x", data.draw(st.integers(0, 1))),),
                                 data.draw(st.sampled_from(creates)).id)
                       for _ in range(data.draw(st.integers(1, 3))))
    sim = Simulation(model, config=SimConfig(max_ticks=30, injections=injections))
    prev = None
    for state in sim.states():
        if prev is not None:
            before = {t.id: t for t in prev.tokens}
            after = {t.id: t for t in state.tokens}
            gone = set(before) - set(after)
            logged = {r.token for r in state.retired if r.tick == state.tick}
            assert gone <= logged
            for tid in set(after) - set(before):
                assert model.stages[after[tid].stage].kind is StageKind.CREATE or \
                    after[tid].transit is not None
                assert after[tid].born == state.tick
            for tid in set(before) & set(after):
                assert after[tid].thing == before[tid].thing
        prev = state


# small-model oracle

def _oracle_successor(model, placement):
    """One tick of token movement, written against the raw flow list."""
    nxt = []
    for stage, x in placement:
        flows = [f for f in model.flows.values() if f.src == stage]

        def ok(g):
            v = {"=": x == g.right.value, ">": x > g.right.value}[g.op]
            return v

        chosen = next((f for f in flows if f.guard is not None and ok(f.guard)), None) or \
            next((f for f in flows if f.guard is None), None)
        if chosen is None:
            nxt.append((stage, x))
        elif not model.stages[chosen.dst].sink:
            nxt.append((chosen.dst, x))
    return tuple(sorted(nxt))


def _oracle_reachable(model, start):
    seen, frontier = {start}, [start]
    while frontier:
        state = frontier.pop()
        succ = _oracle_successor(model, state)
        if succ not in seen:
            seen.add(succ)
            frontier.append(succ)
    return seen


@settings(max_examples=1000, deadline=None)
@given(valid_models(max_stages=6, machines=2, triggers=False, simplifiable=False), st.data())
def test_small_models_match_brute_force(model, data):
    creates = [s.id for s in model.stages.values() if s.kind is StageKind.CREATE]
    tokens = [(data.draw(st.sampled_from(creates)), data.draw(st.integers(0, 1)))
              for _ in range(data.draw(st.integers(1, 2)))]
    injections = tuple(Injection(0, "thing", (("x", x),), s) for s, x in tokens)
    sim = Simulation(model, config=SimConfig(max_ticks=80, injections=injections))
    got = {tuple(sorted((t.stage, dict(t.attrs)["x"]) for t in s.tokens)) for s in sim.states()}
    assert got == _oracle_reachable(model, tuple(sorted(tokens)))


# help desk arithmetic

def expected_outcome(current, requested):
    """Closed-form case split for the spare-parts request."""
    if current == 0:
        return {"counter": 1, "delivered": None, "parked": requested, "remaining": None}
    remaining = current - requested
    if remaining >= 0:
        return {"counter": 0, "delivered": requested, "parked": None, "remaining": remaining}
    return {"counter": 0, "delivered": current, "parked": requested - current,
            "remaining": remaining}


def observed_outcome(result):
    state = result.state
    delivered = token_at(state, "User.process[48]")
    parked = token_at(state, "PendingRequests.process[37]")
    assert len(delivered) <= 1 and len(parked) <= 1
    d = dict(delivered[0].attrs) if delivered else None
    return {
        "counter": state.store("pending_count")["value"],
        "delivered": d["requested"] if d else None,
        "parked": dict(parked[0].attrs)["requested"] if parked else None,
        "remaining": d["remaining"] if d else None,
    }


def sweep(desk, upto=20):
    mismatches = []
    for current in range(upto + 1):
        for requested in range(upto + 1):
            _, result = simulate(desk, f"request current={current} requested={requested}")
            if observed_outcome(result) != expected_outcome(current, requested) \
                    or not result.quiescent:
                mismatches.append((current, requested))
    return mismatches


def test_helpdesk_sweep(desk):
    assert sweep(desk) == []


def test_expected_outcome_examples():
    assert expected_outcome(5, 3) == {"counter": 0, "delivered": 3, "parked": None, "remaining": 2}
    assert expected_outcome(3, 6)["parked"] == 3
    assert expected_outcome(0, 0)["counter"] == 1
