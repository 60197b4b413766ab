"""A ``.tm`` file resolved into everything the tools act on."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from . import syntax as syn
from .behavior import Chronology, Event, build_chronology, build_events, validate_chronology, validate_event
from .dsl import SourceFile, parse
from .model import BuildError, Diagnostic, Model, build_model, sort_diagnostics, validate
from .simulator import ControlRule


@dataclass(frozen=True)
class Project:
    ast: syn.Ast
    model: Model
    events: tuple[Event, ...]
    chronology: Chronology
    rules: tuple[ControlRule, ...]

    @property
    def event(self) -> dict[str, Event]:
        return {e.id: e for e in self.events}

    def diagnostics(self) -> list[Diagnostic]:
        """Everything wrong with the file beyond syntax: model, events, chronology, rules."""
        diags = list(validate(self.model))
        for e in self.events:
            diags += validate_event(self.model, e)
        seen: dict[str, syn.EventDecl] = {}
        for d in self.ast.events:
            if d.name in seen:
                diags.append(Diagnostic("DuplicateId", f"event '{d.name}' declared twice",
                                        d.span, d.name))
            seen[d.name] = d
        diags += validate_chronology(self.chronology, self.ast.chronology)
        names = {e.id for e in self.events}
        for c in self.ast.controls:
            for name in (c.from_event, c.to_event):
                if name not in names:
                    diags.append(Diagnostic("UnknownEvent",
                                            f"control '{c.name}' names undeclared event '{name}'",
                                            c.span, name))
            if c.threshold < 1:
                diags.append(Diagnostic("BadThreshold",
                                        f"control '{c.name}': threshold must be at least 1",
                                        c.span, c.name))
        return sort_diagnostics(diags)


def rules_from(decls) -> tuple[ControlRule, ...]:
    return tuple(ControlRule(c.name, c.from_event, c.to_event, c.threshold, c.message)
                 for c in decls if c.threshold >= 1)


def from_ast(ast: syn.Ast) -> Project:
    """Resolve a parsed file; raises ``BuildError`` on dangling or duplicate names."""
    model = build_model(ast)
    events = tuple(build_events(model, ast.events))
    chron = build_chronology([e.id for e in events], ast.chronology)
    return Project(ast, model, events, chron, rules_from(ast.controls))


def load(source: Union[str, Path, SourceFile], text: Optional[str] = None) -> Project:
    """Parse and resolve ``source`` (a path, or a name with ``text``)."""
    if isinstance(source, SourceFile):
        src = source
    elif text is not None:
        src = SourceFile(str(source), text)
    else:
        src = SourceFile.read(source)
    return from_ast(parse(src))


__all__ = ["Project", "load", "from_ast", "rules_from", "BuildError"]
