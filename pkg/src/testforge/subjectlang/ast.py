"""Abstract syntax of the subject language.

Nodes compare by identity; structural comparison goes through the pretty printer.
Every statement and every branching expression carries a source position, which
doubles as its coverage location.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

PRIMITIVES = ("int", "bool", "void")


class Loc(NamedTuple):
    """Coverage location: enclosing function plus source position."""

    func: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.func}:{self.line}:{self.col}"

    @classmethod
    def parse(cls, text: str) -> Loc:
        func, line, col = text.rsplit(":", 2)
        return cls(func, int(line), int(col))


# -- expressions -------------------------------------------------------------

@dataclass(eq=False)
class IntLit:
    value: int
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class BoolLit:
    value: bool
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class NullLit:
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Var:
    name: str
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Field:
    obj: Expr
    name: str
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Unary:
    op: str  # '-' or '!'
    operand: Expr
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Binary:
    op: str
    left: Expr
    right: Expr
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Call:
    name: str
    args: list[Expr]
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class New:
    record: str
    line: int = 0
    col: int = 0


Expr = Union[IntLit, BoolLit, NullLit, Var, Field, Unary, Binary, Call, New]

# -- statements --------------------------------------------------------------


@dataclass(eq=False)
class Decl:
    type: str
    name: str
    init: Optional[Expr]
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Assign:
    name: str
    value: Expr
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Store:
    target: Field
    value: Expr
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class If:
    cond: Expr
    then: list[Stmt]
    orelse: list[Stmt]
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class While:
    cond: Expr
    body: list[Stmt]
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Return:
    value: Optional[Expr]
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class Check:
    cond: Expr
    message: Optional[str] = None
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class ExprStmt:
    expr: Call
    line: int = 0
    col: int = 0


Stmt = Union[Decl, Assign, Store, If, While, Return, Check, ExprStmt]

# -- declarations ------------------------------------------------------------


@dataclass(eq=False)
class Param:
    name: str
    type: str


@dataclass(eq=False)
class RecordDecl:
    name: str
    fields: list[Param]
    line: int = 0
    col: int = 0

    def field_type(self, name: str) -> Optional[str]:
        for f in self.fields:
            if f.name == name:
                return f.type
        return None

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]


@dataclass(eq=False)
class FunctionDef:
    name: str
    params: list[Param]
    ret: str
    body: list[Stmt]
    requires: Optional[Expr] = None
    ensures: Optional[Expr] = None
    line: int = 0
    col: int = 0

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.params]


@dataclass(eq=False)
class Program:
    records: dict[str, RecordDecl] = field(default_factory=dict)
    functions: dict[str, FunctionDef] = field(default_factory=dict)

    def function(self, name: str) -> FunctionDef:
        try:
            return self.functions[name]
        except KeyError:
            raise KeyError(f"unknown function {name!r}") from None

    def record(self, name: str) -> RecordDecl:
        try:
            return self.records[name]
        except KeyError:
            raise KeyError(f"unknown record {name!r}") from None


def loc_of(func: str, node) -> Loc:
    return Loc(func, node.line, node.col)


def walk_stmts(stmts: list[Stmt]):
    """Yield every statement in a block, recursively, in source order."""
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk_stmts(s.then)
            yield from walk_stmts(s.orelse)
        elif isinstance(s, While):
            yield from walk_stmts(s.body)


def stmt_exprs(s: Stmt) -> list[Expr]:
    if isinstance(s, Decl):
        return [s.init] if s.init is not None else []
    if isinstance(s, Store):
        return [s.target.obj, s.value]
    if isinstance(s, Assign):
        return [s.value]
    if isinstance(s, (If, While, Check)):
        return [s.cond]
    if isinstance(s, Return):
        return [s.value] if s.value is not None else []
    if isinstance(s, ExprStmt):
        return [s.expr]
    return []


def walk_expr(e: Expr):
    yield e
    if isinstance(e, Field):
        yield from walk_expr(e.obj)
    elif isinstance(e, Unary):
        yield from walk_expr(e.operand)
    elif isinstance(e, Binary):
        yield from walk_expr(e.left)
        yield from walk_expr(e.right)
    elif isinstance(e, Call):
        for a in e.args:
            yield from walk_expr(a)


def branch_points(fn: FunctionDef):
    """Locations with two outcomes: if/while conditions and short-circuit operators."""
    out = []
    for s in walk_stmts(fn.body):
        if isinstance(s, (If, While)):
            out.append(loc_of(fn.name, s))
        for e in stmt_exprs(s):
            for sub in walk_expr(e):
                if isinstance(sub, Binary) and sub.op in ("&&", "||"):
                    out.append(loc_of(fn.name, sub))
    return out


def called_functions(fn: FunctionDef) -> list[str]:
    names = []
    for s in walk_stmts(fn.body):
        for e in stmt_exprs(s):
            for sub in walk_expr(e):
                if isinstance(sub, Call) and sub.name not in names:
                    names.append(sub.name)
    return names


def reachable_functions(p: Program, root: str) -> list[str]:
    order, stack = [], [root]
    while stack:
        name = stack.pop(0)
        if name in order or name not in p.functions:
            continue
        order.append(name)
        stack.extend(called_functions(p.functions[name]))
    return order
