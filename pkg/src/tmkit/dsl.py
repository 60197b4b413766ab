"""Textual ``.tm`` language: lexer, recursive-descent parser, canonical printer.

Grammar (newline-insensitive, ``#`` comments to end of line)::

    file       := model event* chronology? control*
    model      := "model" ID "{" (machine | thing | flow | trigger)* "}"
    machine    := "machine" ID "{" (stage | machine | thing)* "}"
    thing      := "thing" ID ("{" attr ("," attr)* "}")?
    attr       := ID (":" ("int" | "nat"))? ("=" "-"? INT)?
    stage      := KIND ("[" LABEL "]")? ("of" ID)? "sink"? ("guard" pred)?
                  ("do" assign (";" assign)*)?
    flow       := "flow" ID ":" stageref "->" stageref ("when" pred)? ("after" INT)?
    trigger    := "trigger" ID ":" stageref "~>" stageref
    event      := "event" ID STRING "{" "region" ":" item ("," item)*
                  ("anchor" ":" stageref)? "}"
    chronology := "chronology" "{" ("forbid"? ID "->" ID ";")* "}"
    control    := "control" ID "{" "when" "elapsed" "(" ID "->" ID ")" ">" INT
                  "emit" STRING "}"
    stageref   := ID "." KIND ("[" LABEL "]")?
    item       := stageref | ID                      # ID names a flow
    pred       := cmp ("and" cmp)*
    cmp        := expr ("=" | "!=" | "<" | "<=" | ">" | ">=") expr
    assign     := ref ":=" expr
    expr       := atom (("+" | "-") atom)*
    atom       := "-"? INT | ref | "(" expr ")"
    ref        := ID ("." ID)?
"""

from __future__ import annotations

import bisect
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import syntax as syn
from .expr import (Assign, BinOp, Compare, Conjunction, Num, Predicate, Ref, format_assign,
                   format_predicate)
from .model import Diagnostic

KINDS = ("create", "process", "release", "transfer", "receive")
KEYWORDS = frozenset(KINDS) | frozenset({
    "model", "machine", "thing", "flow", "trigger", "event", "region", "anchor",
    "chronology", "forbid", "control", "when", "elapsed", "emit", "guard", "do", "of",
    "sink", "after", "and", "int", "nat",
})

_UNICODE_OPS = {"≠": "!=", "≤": "<=", "≥": ">="}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>[0-9]+)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|~>|:=|!=|<=|>=|[{}\[\](),;:.=<>+\-≠≤≥])
""", re.VERBOSE)


@dataclass
class SourceFile:
    path: str
    content: str
    _starts: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        self._starts = [0] + [m.end() for m in re.finditer("\n", self.content)]

    @classmethod
    def read(cls, path: Union[str, Path]) -> "SourceFile":
        raw = Path(path).read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError([Diagnostic("LexError", f"not valid UTF-8 ({exc.reason})",
                                         syn.Span(1, 1, 1, 1))]) from None
        return cls(str(path), text)

    def position(self, offset: int) -> tuple[int, int]:
        """1-based line and column of a character offset."""
        line = bisect.bisect_right(self._starts, offset) - 1
        return line + 1, offset - self._starts[line] + 1

    def span(self, start: int, end: int) -> syn.Span:
        return syn.Span(*self.position(start), *self.position(end))


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Token:
    kind: str  # "word", "keyword", "int", "string", "op", "eof"
    text: str
    span: syn.Span


def tokenize(source: SourceFile) -> list[Token]:
    text = source.content
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            span = source.span(pos, pos + 1)
            what = ("unterminated string" if text[pos] == '"'
                    else f"unexpected character {text[pos]!r}")
            raise ParseError([Diagnostic("LexError", what, span)])
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            value = m.group()
            if kind == "word" and value in KEYWORDS:
                kind = "keyword"
            elif kind == "op":
                value = _UNICODE_OPS.get(value, value)
            tokens.append(Token(kind, value, source.span(m.start(), m.end())))
        pos = m.end()
    end = source.span(len(text), len(text))
    tokens.append(Token("eof", "", end))
    return tokens


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    # token plumbing

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, ahead: int = 1) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("keyword", "op") and t.text in texts

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, expected: str):
        t = self.tok
        raise ParseError([Diagnostic("SyntaxError", f"expected {expected}, found {_describe(t)}",
                                     t.span)])

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(repr(text))
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def ident(self) -> Token:
        if self.tok.kind != "word":
            self.fail("an identifier")
        return self.advance()

    def integer(self) -> int:
        negative = self.accept("-")
        if self.tok.kind != "int":
            self.fail("an integer")
        value = int(self.advance().text)
        return -value if negative else value

    def string(self) -> str:
        if self.tok.kind != "string":
            self.fail("a string")
        tok = self.advance()
        try:
            return json.loads(tok.text, strict=False)
        except json.JSONDecodeError:
            raise ParseError([Diagnostic("LexError", "bad escape in string", tok.span)]) from None

    def span_from(self, start: Token) -> syn.Span:
        last = self.toks[self.i - 1] if self.i > 0 else start
        return syn.Span(start.span.line, start.span.column, last.span.end_line,
                        last.span.end_column)

    # file structure

    def file(self) -> syn.Ast:
        model = self.model()
        events = []
        while self.at("event"):
            events.append(self.event())
        chronology = self.chronology() if self.at("chronology") else None
        controls = []
        while self.at("control"):
            controls.append(self.control())
        if self.tok.kind != "eof":
            expected = "'control'" if chronology else "'event', 'chronology' or 'control'"
            self.fail(expected)
        return syn.Ast(model, tuple(events), chronology, tuple(controls))

    def model(self) -> syn.ModelDecl:
        start = self.expect("model")
        name = self.ident().text
        self.expect("{")
        items = []
        while not self.at("}"):
            if self.at("machine"):
                items.append(self.machine())
            elif self.at("thing"):
                items.append(self.thing())
            elif self.at("flow"):
                items.append(self.flow())
            elif self.at("trigger"):
                items.append(self.trigger())
            else:
                self.fail("'machine', 'thing', 'flow', 'trigger' or '}'")
        self.expect("}")
        return syn.ModelDecl(name, tuple(items), self.span_from(start))

    def machine(self) -> syn.MachineDecl:
        start = self.expect("machine")
        name = self.ident().text
        self.expect("{")
        items = []
        while not self.at("}"):
            if self.at(*KINDS):
                items.append(self.stage())
            elif self.at("machine"):
                items.append(self.machine())
            elif self.at("thing"):
                items.append(self.thing())
            else:
                self.fail("a stage kind, 'machine', 'thing' or '}'")
        self.expect("}")
        return syn.MachineDecl(name, tuple(items), self.span_from(start))

    def thing(self) -> syn.ThingDecl:
        start = self.expect("thing")
        name = self.ident().text
        attrs = []
        if self.accept("{"):
            attrs.append(self.attr())
            while self.accept(","):
                attrs.append(self.attr())
            self.expect("}")
        return syn.ThingDecl(name, tuple(attrs), self.span_from(start))

    def attr(self) -> syn.AttrDecl:
        start = self.ident()
        nonneg = False
        if self.accept(":"):
            if self.accept("nat"):
                nonneg = True
            elif not self.accept("int"):
                self.fail("'int' or 'nat'")
        default = self.integer() if self.accept("=") else 0
        return syn.AttrDecl(start.text, nonneg, default, self.span_from(start))

    def label(self) -> Optional[str]:
        if not self.accept("["):
            return None
        if self.tok.kind not in ("word", "keyword", "int"):
            self.fail("a label")
        text = self.advance().text
        self.expect("]")
        return text

    def stage(self) -> syn.StageDecl:
        start = self.advance()
        label = self.label()
        thing = self.ident().text if self.accept("of") else None
        sink = self.accept("sink")
        guard = self.predicate() if self.accept("guard") else None
        actions = []
        if self.accept("do"):
            actions.append(self.assign())
            while self.accept(";"):
                actions.append(self.assign())
        return syn.StageDecl(start.text, label, thing, sink, guard, tuple(actions),
                             self.span_from(start))

    def stageref(self) -> syn.StageRef:
        start = self.ident()
        self.expect(".")
        if not self.at(*KINDS):
            self.fail("a stage kind")
        kind = self.advance().text
        label = self.label()
        return syn.StageRef(start.text, kind, label, self.span_from(start))

    def flow(self) -> syn.FlowDecl:
        start = self.expect("flow")
        name = self.ident().text
        self.expect(":")
        src = self.stageref()
        self.expect("->")
        dst = self.stageref()
        guard = self.predicate() if self.accept("when") else None
        ticks = self.integer() if self.accept("after") else 1
        return syn.FlowDecl(name, src, dst, guard, ticks, self.span_from(start))

    def trigger(self) -> syn.TriggerDecl:
        start = self.expect("trigger")
        name = self.ident().text
        self.expect(":")
        src = self.stageref()
        self.expect("~>")
        dst = self.stageref()
        return syn.TriggerDecl(name, src, dst, self.span_from(start))

    def event(self) -> syn.EventDecl:
        start = self.expect("event")
        name = self.ident().text
        description = self.string()
        self.expect("{")
        self.expect("region")
        self.expect(":")
        region = [self.item()]
        while self.accept(","):
            region.append(self.item())
        anchor = None
        if self.accept("anchor"):
            self.expect(":")
            anchor = self.stageref()
        self.expect("}")
        return syn.EventDecl(name, description, tuple(region), anchor, self.span_from(start))

    def item(self) -> Union[syn.StageRef, str]:
        if self.tok.kind == "word" and self.peek().text == ".":
            return self.stageref()
        return self.ident().text

    def chronology(self) -> syn.ChronologyDecl:
        start = self.expect("chronology")
        self.expect("{")
        edges = []
        while not self.at("}"):
            first = self.tok
            forbid = self.accept("forbid")
            src = self.ident().text
            self.expect("->")
            dst = self.ident().text
            self.expect(";")
            edges.append(syn.ChronEdge(src, dst, forbid, self.span_from(first)))
        self.expect("}")
        return syn.ChronologyDecl(tuple(edges), self.span_from(start))

    def control(self) -> syn.ControlDecl:
        start = self.expect("control")
        name = self.ident().text
        self.expect("{")
        self.expect("when")
        self.expect("elapsed")
        self.expect("(")
        src = self.ident().text
        self.expect("->")
        dst = self.ident().text
        self.expect(")")
        self.expect(">")
        threshold = self.integer()
        self.expect("emit")
        message = self.string()
        self.expect("}")
        return syn.ControlDecl(name, src, dst, threshold, message, self.span_from(start))

    # expressions

    def predicate(self) -> Predicate:
        terms = [self.compare()]
        while self.accept("and"):
            terms.append(self.compare())
        return terms[0] if len(terms) == 1 else Conjunction(tuple(terms))

    def compare(self) -> Compare:
        left = self.expr()
        if not self.at("=", "!=", "<", "<=", ">", ">="):
            self.fail("a comparison operator")
        op = self.advance().text
        return Compare(op, left, self.expr())

    def assign(self) -> Assign:
        target = self.ref()
        self.expect(":=")
        return Assign(target, self.expr())

    def ref(self) -> Ref:
        first = self.ident().text
        if self.accept("."):
            return Ref(self.ident().text, first)
        return Ref(first)

    def expr(self):
        node = self.atom()
        while self.at("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.atom())
        return node

    def atom(self):
        if self.at("-") or self.tok.kind == "int":
            return Num(self.integer())
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        if self.tok.kind == "word":
            return self.ref()
        self.fail("a number, attribute or '('")


def parse(source: Union[SourceFile, str]) -> syn.Ast:
    """Parse a whole ``.tm`` file; raises ``ParseError`` with positioned diagnostics."""
    if isinstance(source, str):
        source = SourceFile("<string>", source)
    return _Parser(tokenize(source)).file()


def parse_file(path: Union[str, Path]) -> syn.Ast:
    return parse(SourceFile.read(path))


def parse_expression(text: str) -> Union[Predicate, Assign]:
    """Parse a guard (``remaining >= 0``) or an assignment (``x := a - b``)."""
    p = _Parser(tokenize(SourceFile("<expr>", text)))
    if p.tok.kind == "word" and (p.peek().text == ":=" or
                                 (p.peek().text == "." and p.peek(3).text == ":=")):
        node = p.assign()
    else:
        node = p.predicate()
    if p.tok.kind != "eof":
        p.fail("end of expression")
    return node


# canonical printing

def _q(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _ref(r: syn.StageRef) -> str:
    return r.id


def _attr(a: syn.AttrDecl) -> str:
    out = a.name + (": nat" if a.nonneg else "")
    return out + (f" = {a.default}" if a.default else "")


def _thing(t: syn.ThingDecl) -> str:
    if not t.attrs:
        return f"thing {t.name}"
    return f"thing {t.name} {{ {', '.join(_attr(a) for a in t.attrs)} }}"


def _stage(s: syn.StageDecl) -> str:
    out = s.kind + (f"[{s.label}]" if s.label is not None else "")
    if s.thing is not None:
        out += f" of {s.thing}"
    if s.sink:
        out += " sink"
    if s.guard is not None:
        out += f" guard {format_predicate(s.guard)}"
    if s.actions:
        out += " do " + "; ".join(format_assign(a) for a in s.actions)
    return out


def _block(head: str, lines: list[str], indent: str) -> list[str]:
    if not lines:
        return [f"{indent}{head} {{ }}"]
    return [f"{indent}{head} {{", *lines, f"{indent}}}"]


def _machine(m: syn.MachineDecl, indent: str) -> list[str]:
    inner = indent + "  "
    lines: list[str] = []
    for item in m.items:
        if isinstance(item, syn.StageDecl):
            lines.append(inner + _stage(item))
        elif isinstance(item, syn.ThingDecl):
            lines.append(inner + _thing(item))
        else:
            lines.extend(_machine(item, inner))
    return _block(f"machine {m.name}", lines, indent)


def serialize(ast: Union[syn.Ast, syn.ModelDecl]) -> str:
    """Canonical text for ``ast``; ``parse(serialize(ast)) == ast``."""
    if isinstance(ast, syn.ModelDecl):
        ast = syn.Ast(ast)
    lines: list[str] = []
    body: list[str] = []
    for item in ast.model.items:
        if isinstance(item, syn.MachineDecl):
            body.extend(_machine(item, "  "))
        elif isinstance(item, syn.ThingDecl):
            body.append("  " + _thing(item))
        elif isinstance(item, syn.FlowDecl):
            text = f"  flow {item.name}: {_ref(item.src)} -> {_ref(item.dst)}"
            if item.guard is not None:
                text += f" when {format_predicate(item.guard)}"
            if item.ticks != 1:
                text += f" after {item.ticks}"
            body.append(text)
        else:
            body.append(f"  trigger {item.name}: {_ref(item.src)} ~> {_ref(item.dst)}")
    lines.extend(_block(f"model {ast.model.name}", body, ""))

    for ev in ast.events:
        region = ", ".join(_ref(r) if isinstance(r, syn.StageRef) else r for r in ev.region)
        inner = [f"  region: {region}"]
        if ev.anchor is not None:
            inner.append(f"  anchor: {_ref(ev.anchor)}")
        lines += ["", f"event {ev.name} {_q(ev.description)} {{", *inner, "}"]

    if ast.chronology is not None:
        edges = [f"  {'forbid ' if e.forbid else ''}{e.src} -> {e.dst};"
                 for e in ast.chronology.edges]
        lines += [""] + _block("chronology", edges, "")

    for c in ast.controls:
        lines += ["", f"control {c.name} {{",
                  f"  when elapsed({c.from_event} -> {c.to_event}) > {c.threshold} "
                  f"emit {_q(c.message)}", "}"]
    return "\n".join(lines) + "\n"
