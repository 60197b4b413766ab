"""``tm`` command: validate, inspect, run, check, export and reshape ``.tm`` files.

Exit codes: 0 clean, 1 diagnostics or violations, 2 usage error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, TextIO

from . import __version__
from .behavior import TraceFormatError, UnknownEvent, check_trace, format_trace, read_trace, region_stages
from .dsl import ParseError, SourceFile, serialize
from .expr import EvaluationError
from .model import BuildError, Diagnostic, UnknownMachine
from .project import Project, from_ast, load
from .simulator import InjectionError, SimConfig, Simulation, SimulationError, format_report, parse_injection
from .transforms import AmbiguousSplice, format_class, restrict_events, simplify, simplify_ast, to_class, to_dot

OK, FAILED, USAGE, IO = 0, 1, 2, 3


class _IOFailure(Exception):
    pass


class _Failed(Exception):
    """Ends the command with exit 1 after the given lines go to stderr."""

    def __init__(self, *lines: str):
        self.lines = lines


class _Out:
    def __init__(self, stdout: TextIO, stderr: TextIO):
        self.stdout, self.stderr = stdout, stderr
        mode = os.environ.get("TM_COLOR", "auto").lower()
        if mode == "always":
            self.color = True
        elif mode == "never":
            self.color = False
        else:
            self.color = hasattr(stdout, "isatty") and stdout.isatty() and "NO_COLOR" not in os.environ

    def paint(self, text: str, code: str) -> str:
        return f"\033[{code}m{text}\033[0m" if self.color else text

    def line(self, text: str = ""):
        print(text, file=self.stdout)

    def err(self, text: str):
        print(text, file=self.stderr)


def _fixture_dir() -> Path:
    return Path(str(resources.files("tmkit") / "fixtures"))


def resolve(path: str) -> Path:
    """``path`` itself, or the shipped fixture of that name when no such file exists."""
    p = Path(path)
    if p.exists():
        return p
    base = _fixture_dir()
    parts = p.parts[1:] if p.parts and p.parts[0] == "fixtures" else p.parts
    for candidate in (base.joinpath(*parts), base / "traces" / p.name, base / p.name):
        if parts and candidate.exists():
            return candidate
    return p


def _read_source(path: str) -> SourceFile:
    p = resolve(path)
    try:
        return SourceFile.read(p)
    except ParseError:
        raise
    except OSError as exc:
        raise _IOFailure(f"{path}: {exc.strerror or exc}") from None


def _write(path: Optional[str], text: str, out: _Out):
    if path is None or path == "-":
        out.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise _IOFailure(f"{path}: {exc.strerror or exc}") from None


def _diag_line(path: str, d: Diagnostic, tsv: bool, out: _Out) -> str:
    line, col = (d.span.line, d.span.column) if d.span else (0, 0)
    if tsv:
        return f"{path}\t{line}\t{col}\t{d.code}\t{d.subject}\t{d.message}"
    return f"{path}:{line}:{col}: {out.paint(d.code, '31')}: {d.message}"


def _project(path: str, out: _Out, tsv: bool, check: bool = True) -> Project:
    """Load ``path``; print diagnostics and stop with exit 1 if anything is wrong."""
    try:
        src = _read_source(path)
        project = load(src)
        diags = project.diagnostics() if check else []
    except (ParseError, BuildError) as exc:
        diags = exc.diagnostics
        project = None
    if diags:
        for d in diags:
            out.line(_diag_line(path, d, tsv, out))
        raise _Failed()
    return project


# subcommands

def cmd_validate(args, out: _Out) -> int:
    project = _project(args.file, out, args.format == "tsv")
    if args.format != "tsv":
        m = project.model
        out.line(f"{args.file}: ok ({len(m.machines)} machines, {len(m.stages)} stages, "
                 f"{len(m.flows)} flows, {len(m.triggers)} triggers, {len(project.events)} events)")
    return OK


def cmd_events(args, out: _Out) -> int:
    project = _project(args.file, out, args.format == "tsv")
    model = project.model
    for e in project.events:
        region = ",".join(region_stages(model, e))
        nexts = ",".join(project.chronology.successors(e.id))
        if args.format == "tsv":
            out.line(f"{e.id}\t{e.anchor}\t{region}\t{nexts}\t{e.description}")
        else:
            out.line(f"{out.paint(e.id, '1')}  {e.description}")
            out.line(f"  anchor: {e.anchor}")
            out.line(f"  region: {region}")
            out.line(f"  next:   {nexts or '-'}")
    return OK


def cmd_simulate(args, out: _Out) -> int:
    project = _project(args.file, out, args.format == "tsv")
    try:
        injections = tuple(parse_injection(text, project.model) for text in args.inject)
        sim = Simulation(project.model, project.events, project.rules,
                         SimConfig(max_ticks=args.ticks, injections=injections))
        result = sim.run(project.chronology)
    except (InjectionError, SimulationError, EvaluationError) as exc:
        raise _Failed(f"{args.file}: {type(exc).__name__}: {exc}") from None
    report = format_report(result, sim)
    if out.color and args.format != "tsv":
        report = report.replace("\nWARNINGS\n", "\n" + out.paint("WARNINGS", "33") + "\n")
    out.stdout.write(report)
    if args.trace:
        _write(args.trace, format_trace(result.trace), out)
    return FAILED if result.violations else OK


def cmd_check(args, out: _Out) -> int:
    project = _project(args.file, out, args.format == "tsv")
    trace_path = resolve(args.trace)
    try:
        trace = read_trace(trace_path)
    except OSError as exc:
        raise _IOFailure(f"{args.trace}: {exc.strerror or exc}") from None
    except TraceFormatError as exc:
        raise _Failed(f"{args.trace}: TraceFormatError: {exc}") from None
    try:
        violations = check_trace(project.chronology, trace)
    except UnknownEvent as exc:
        raise _Failed(f"{args.trace}: UnknownEvent: {exc.args[0]}") from None
    for v in violations:
        if args.format == "tsv":
            out.line(f"{v.index}\t{v.previous}\t{v.next}\t{v.reason}\t{v.tick}")
        else:
            out.line(f"{args.trace}: occurrence {v.index + 1} (tick {v.tick}): "
                     f"{v.previous} -> {v.next} {out.paint(v.reason, '31')}")
    if not violations and args.format != "tsv":
        out.line(f"{args.trace}: {len(trace)} occurrences, no violations")
    return FAILED if violations else OK


def cmd_export(args, out: _Out) -> int:
    project = _project(args.file, out, False)
    model, events = project.model, project.events
    if args.simplified:
        try:
            simple = simplify(model)
        except AmbiguousSplice as exc:
            raise _Failed(f"{args.file}: AmbiguousSplice: {exc}") from None
        events = restrict_events(model, simple, events)
        model = simple
    _write(args.output, to_dot(model, events if args.events else ()), out)
    return OK


def cmd_simplify(args, out: _Out) -> int:
    project = _project(args.file, out, False)
    try:
        ast = simplify_ast(project.ast, project.model, project.events)
    except AmbiguousSplice as exc:
        raise _Failed(f"{args.file}: AmbiguousSplice: {exc}") from None
    from_ast(ast)  # the result must resolve again
    _write(args.output, serialize(ast), out)
    return OK


def cmd_classmap(args, out: _Out) -> int:
    project = _project(args.file, out, args.format == "tsv")
    machine = args.machine or project.model.root
    try:
        skel = to_class(project.model, machine, project.events)
    except UnknownMachine:
        raise _Failed(f"{args.file}: UnknownMachine: no machine '{machine}'") from None
    out.stdout.write(format_class(skel, tsv=args.format == "tsv"))
    return OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tm", description="Thinging machine models: check, run, draw.")
    p.add_argument("--version", action="version", version=f"tm {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def command(name, func, help, fmt=("text", "tsv")):
        sp = sub.add_parser(name, help=help, description=help)
        sp.add_argument("file", help=".tm model file")
        sp.add_argument("--format", choices=fmt, default=fmt[0])
        sp.set_defaults(func=func)
        return sp

    command("validate", cmd_validate, "report every diagnostic in a model file")
    command("events", cmd_events, "list events with anchors, regions and permitted successors")
    sp = command("simulate", cmd_simulate, "run the model and print the run report")
    sp.add_argument("--ticks", type=int, default=500, help="tick limit (default 500)")
    sp.add_argument("--inject", action="append", default=[], metavar="SPEC",
                    help='token to inject, e.g. "request current=0 requested=2 @0"')
    sp.add_argument("--trace", metavar="FILE", help="also write the occurrence log here")
    sp = command("check", cmd_check, "check a trace file against the chronology")
    sp.add_argument("trace", help="tab-separated 'event tick' lines")
    sp = command("export", cmd_export, "draw the model as a DOT digraph", fmt=("dot",))
    sp.add_argument("-o", "--output", help="output file (default stdout)")
    sp.add_argument("--events", action="store_true", help="tint event regions")
    sp.add_argument("--simplified", action="store_true", help="draw the simplified model")
    sp = command("simplify", cmd_simplify, "drop release/transfer/receive stages", fmt=("tm",))
    sp.add_argument("-o", "--output", help="output file (default stdout)")
    sp = command("classmap", cmd_classmap, "class skeleton for one machine")
    sp.add_argument("--machine", help="machine id (default: the model itself)")
    return p


def main(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None,
         stderr: Optional[TextIO] = None) -> int:
    out = _Out(stdout or sys.stdout, stderr or sys.stderr)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE
    if getattr(args, "ticks", 1) < 1:
        out.err("tm: --ticks must be at least 1")
        return USAGE
    try:
        return args.func(args, out)
    except _Failed as exc:
        for line in exc.lines:
            out.err(line)
        return FAILED
    except _IOFailure as exc:
        out.err(f"tm: {exc}")
        return IO


def entry() -> None:
    sys.exit(main())
