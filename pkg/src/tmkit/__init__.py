"""Thinging machine models: a textual language, validation, events and simulation."""

__version__ = "0.1.0"

from .behavior import (Chronology, Event, Occurrence, Violation, build_chronology, build_events,
                       check_trace, enumerate_traces, validate_chronology, validate_event)
from .dsl import ParseError, parse, parse_file, serialize
from .model import (BuildError, Diagnostic, Model, StageKind, build_model, reachable_stages,
                    validate)
from .project import Project, load
from .simulator import ControlRule, Injection, SimConfig, Simulation, elapsed, run
from .transforms import AmbiguousSplice, simplify, to_class, to_dot

__all__ = [
    "AmbiguousSplice", "BuildError", "Chronology", "ControlRule", "Diagnostic", "Event",
    "Injection", "Model", "Occurrence", "ParseError", "Project", "SimConfig", "Simulation",
    "StageKind", "Violation", "build_chronology", "build_events", "build_model", "check_trace",
    "elapsed", "enumerate_traces", "load", "parse", "parse_file", "reachable_stages", "run",
    "serialize", "simplify", "to_class", "to_dot", "validate", "validate_chronology",
    "validate_event",
]
