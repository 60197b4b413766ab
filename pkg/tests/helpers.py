"""Fixture access and small builders shared by the test modules."""

from __future__ import annotations

import re
from pathlib import Path

import tmkit
from tmkit import load
from tmkit.simulator import SimConfig, Simulation, parse_injection

FIXTURES = Path(tmkit.__file__).parent / "fixtures"
TRACES = FIXTURES / "traces"
MODEL_FILES = sorted(FIXTURES.glob("*.tm"))


def fixture(name: str):
    return load(FIXTURES / name)


def helpdesk_with_hold(ticks: int):
    """The help desk with the purchase department holding orders ``ticks`` ticks."""
    text = (FIXTURES / "helpdesk.tm").read_text(encoding="utf-8")
    text, n = re.subn(r"(flow hold: .*?) after \d+", rf"\1 after {ticks}", text)
    assert n == 1
    return load("helpdesk-hold.tm", text)


def simulate(project, *injections: str, max_ticks: int = 500, rules=None):
    injs = tuple(parse_injection(i, project.model) for i in injections)
    sim = Simulation(project.model, project.events,
                     project.rules if rules is None else rules,
                     SimConfig(max_ticks=max_ticks, injections=injs))
    return sim, sim.run(project.chronology)


def token_at(state, stage: str):
    return [t for t in state.tokens if t.stage == stage]
