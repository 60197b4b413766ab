"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
happen; they are also repeated in the terminal summary.
"""

import random
import time

from hypothesis import HealthCheck, Phase, given, settings
from hypothesis import strategies as st

from acceptance_log import report
from helpers import MODEL_FILES, fixture, helpdesk_with_hold, simulate
from strategies import asts, valid_models
from test_simulator import _oracle_reachable, sweep
from test_transforms import bisimulation_mismatches
from tmkit.behavior import all_sequences, check_trace, enumerate_traces
from tmkit.dsl import parse, parse_file, serialize
from tmkit.model import StageKind, validate
from tmkit.simulator import Injection, SimConfig, Simulation, format_report
from tmkit.transforms import simplify, to_class

COOL, OFF, HEAT = "E1", "E2", "E3"


def exhaust(strategy, n):
    """Run ``check`` on ``n`` generated values; returns (cases, failures)."""
    seen, bad = [], []

    def run(check):
        @settings(max_examples=n, deadline=None, database=None, derandomize=True,
                  phases=[Phase.generate], suppress_health_check=list(HealthCheck))
        @given(strategy)
        def inner(value):
            seen.append(1)
            if not check(value):
                bad.append(value)
        inner()
        return len(seen), bad
    return run


def test_thermostat_fixtures():
    start = time.perf_counter()
    six, three = fixture("thermostat6.tm"), fixture("thermostat3.tm")
    clean = six.diagnostics() == [] and three.diagnostics() == []
    ids6, ids3 = [e.id for e in six.events], [e.id for e in three.events]
    ops6 = len(to_class(six.model, six.model.root, six.events).operations)
    ops3 = len(to_class(three.model, three.model.root, three.events).operations)
    took = time.perf_counter() - start
    ok = (clean and ids6 == ["E1", "E2", "E3", "E4", "E5", "E6"] and ids3 == ["E1", "E2", "E3"]
          and (ops6, ops3) == (6, 3) and took < 1.0)
    assert report("thermostat fixtures: 6 vs 3 events and operations, clean, < 1 s", ok,
                  f"events {len(ids6)}/{len(ids3)}, operations {ops6}/{ops3}, {took:.3f} s")


def test_chronology():
    chron = fixture("thermostat6.tm").chronology
    direct = check_trace(chron, [COOL, OFF, HEAT]) == [] and \
        len(check_trace(chron, [COOL, HEAT])) == 1 and len(check_trace(chron, [HEAT, COOL])) == 1
    permitted = set()
    for start in chron.events:
        permitted |= enumerate_traces(chron, start, 6)
    false_accepts = false_rejects = bad_rule = total = 0
    for t in all_sequences(chron.events, 6):
        total += 1
        accepted = check_trace(chron, t) == []
        if accepted and t not in permitted:
            false_accepts += 1
        if not accepted and t in permitted:
            false_rejects += 1
        if accepted and any({a, b} == {COOL, HEAT} for a, b in zip(t, t[1:])):
            bad_rule += 1
    ok = direct and false_accepts == false_rejects == bad_rule == 0
    assert report("chronology: COOL/HEAT never adjacent, enumeration agrees to length 6", ok,
                  f"{total} sequences, {false_accepts} false accepts, {false_rejects} false "
                  f"rejects, {bad_rule} COOL/HEAT accepted")


def test_helpdesk_arithmetic():
    desk = fixture("helpdesk.tm")
    start = time.perf_counter()
    mismatches = sweep(desk, 20)
    took = time.perf_counter() - start
    ok = mismatches == [] and took < 10.0
    assert report("help desk arithmetic: sweep over [0, 20]^2 matches the case split, < 10 s", ok,
                  f"441 cases, {len(mismatches)} mismatches, {took:.2f} s")


def test_control():
    orders = ("request current=0 requested=2", "schedule @20")
    _, slow = simulate(helpdesk_with_hold(10), *orders)
    _, quick = simulate(helpdesk_with_hold(3), *orders)
    ok = len(slow.warnings) == 1 and slow.warnings[0].elapsed > 5 and quick.warnings == ()
    detail = ", ".join(f"{w.rule} elapsed {w.elapsed}" for w in slow.warnings) or "none"
    assert report("control: one warning at delay 10, none at delay 3", ok,
                  f"delay 10: {detail}; delay 3: {len(quick.warnings)} warnings")


def test_simplification():
    mismatches = bisimulation_mismatches(25)
    cases, bad = exhaust(valid_models(), 200)(lambda m: simplify(simplify(m)) == simplify(m))
    ok = mismatches == [] and not bad and cases >= 200
    assert report("simplification: bisimilar on 25 scenarios, idempotent on 200 models", ok,
                  f"{len(mismatches)} log mismatches, {len(bad)}/{cases} not idempotent")


def _scenarios():
    yield "thermostat6.tm", ("signal @0",)
    yield "thermostat3.tm", ("signal @0",)
    desk = [("request current=0 requested=2", "schedule @20"),
            ("request current=3 requested=7",),
            ("request current=5 requested=3",),
            ("request kind=1 repaired=0",),
            ("request kind=1 repaired=1",)]
    for injections in desk:
        yield "helpdesk.tm", injections


def test_round_trips_and_determinism():
    fixtures_ok = all(parse(serialize(parse_file(p))) == parse_file(p) for p in MODEL_FILES)
    cases, bad = exhaust(asts, 500)(lambda ast: parse(serialize(ast)) == ast)
    differing = []
    for name, injections in _scenarios():
        runs = []
        for _ in range(2):
            sim, result = simulate(fixture(name), *injections)
            runs.append(format_report(result, sim).encode())
        if runs[0] != runs[1]:
            differing.append(name)
    ok = fixtures_ok and not bad and cases >= 500 and not differing
    assert report("round trips on fixtures and 500 syntax trees; runs byte-identical", ok,
                  f"{len(MODEL_FILES)} fixtures, {len(bad)}/{cases} trees differ, "
                  f"{len(differing)} nondeterministic scenarios")


@st.composite
def small_cases(draw):
    model = draw(valid_models(max_stages=6, machines=2, triggers=False, simplifiable=False))
    creates = [s.id for s in model.stages.values() if s.kind is StageKind.CREATE]
    tokens = [(draw(st.sampled_from(creates)), draw(st.integers(0, 1)))
              for _ in range(draw(st.integers(1, 2)))]
    return model, tokens


def _agrees(case):
    model, tokens = case
    if validate(model):
        return False
    injections = tuple(Injection(0, "thing", (("x", x),), s) for s, x in tokens)
    sim = Simulation(model, config=SimConfig(max_ticks=80, injections=injections))
    got = {tuple(sorted((t.stage, dict(t.attrs)["x"]) for t in s.tokens)) for s in sim.states()}
    return got == _oracle_reachable(model, tuple(sorted(tokens)))


def test_small_model_oracle():
    cases, bad = exhaust(small_cases(), 1200)(_agrees)
    ok = not bad and cases >= 1000
    assert report("small-model oracle: reachable states equal brute force, >= 1000 cases", ok,
                  f"{cases} cases, {len(bad)} divergences")
