"""The miniature imperative language every program under test is written in."""
from . import ast
from .ast import Loc, Program
from .coverage import CoverageReport, MalformedTrace, coverage_of
from .interp import (
    DEFAULT_STEP_BUDGET,
    BranchEvent,
    CheckEvent,
    CheckViolated,
    ExecutionResult,
    Returned,
    RuntimeFault,
    StepBoundExceeded,
    Trace,
    eval_call,
    eval_contract,
)
from .parser import ParseError, parse, parse_expr
from .printer import pretty
from .typecheck import Diagnostic, typecheck
from .values import INT_MAX, INT_MIN, Handle, Heap, HeapObject, Value, render_value, wrap32


class ProgramError(Exception):
    """Raised by :func:`load` when a source fails to parse or typecheck."""

    def __init__(self, diagnostics: list[Diagnostic], filename: str = "<input>"):
        self.diagnostics = diagnostics
        self.filename = filename
        super().__init__("\n".join(d.format(filename) for d in diagnostics))


def load(source: str, filename: str = "<input>") -> Program:
    """Parse and typecheck; raise :class:`ProgramError` with every diagnostic on failure."""
    try:
        prog = parse(source)
    except ParseError as e:
        raise ProgramError([Diagnostic(e.line, e.col, e.message)], filename) from None
    diags = typecheck(prog)
    if diags:
        raise ProgramError(diags, filename)
    return prog


def with_contract(p: Program, fn: str, kind: str, expr: str) -> Program:
    """Copy of ``p`` where ``fn`` gets the ``requires``/``ensures`` clause ``expr``."""
    import dataclasses

    if kind not in ("requires", "ensures"):
        raise ValueError(f"contract kind must be requires or ensures, not {kind!r}")
    fdef = p.function(fn)
    try:
        clause = parse_expr(expr)
    except ParseError as e:
        raise ProgramError([Diagnostic(e.line, e.col, e.message)], f"<{kind}>") from None
    functions = dict(p.functions)
    functions[fn] = dataclasses.replace(fdef, **{kind: clause})
    prog = Program(dict(p.records), functions)
    diags = typecheck(prog)
    if diags:
        raise ProgramError(diags, f"<{kind}>")
    return prog


__all__ = [
    "ast", "Loc", "Program", "CoverageReport", "MalformedTrace", "coverage_of",
    "DEFAULT_STEP_BUDGET", "BranchEvent", "CheckEvent", "CheckViolated", "ExecutionResult",
    "Returned", "RuntimeFault", "StepBoundExceeded", "Trace", "eval_call", "eval_contract",
    "ParseError", "parse", "parse_expr", "pretty", "Diagnostic", "typecheck",
    "INT_MAX", "INT_MIN", "Handle", "Heap", "HeapObject", "Value", "render_value", "wrap32",
    "ProgramError", "load", "with_contract",
]
