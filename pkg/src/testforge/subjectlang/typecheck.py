"""Static checks: name resolution, typing, arity, contract purity."""
from __future__ import annotations

from dataclasses import dataclass

from . import ast as A

NULL_T = "<null>"


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


class _Checker:
    def __init__(self, prog: A.Program):
        self.p = prog
        self.diags: list[Diagnostic] = []

    def err(self, node, msg: str) -> None:
        self.diags.append(Diagnostic(node.line, node.col, msg))

    def valid_type(self, ty: str, allow_void: bool = False) -> bool:
        if ty in ("int", "bool") or ty in self.p.records:
            return True
        return allow_void and ty == "void"

    @staticmethod
    def assignable(target: str, src: str | None) -> bool:
        if src is None:  # already reported
            return True
        if src == NULL_T:
            return target not in ("int", "bool", "void")
        return src == target

    # -- declarations --------------------------------------------------------

    def run(self) -> list[Diagnostic]:
        for rec in self.p.records.values():
            for f in rec.fields:
                if not self.valid_type(f.type):
                    self.err(rec, f"unknown type {f.type!r} for field {rec.name}.{f.name}")
        for fn in self.p.functions.values():
            self.function(fn)
        return self.diags

    def function(self, fn: A.FunctionDef) -> None:
        if not self.valid_type(fn.ret, allow_void=True):
            self.err(fn, f"unknown return type {fn.ret!r}")
        scope = {}
        for prm in fn.params:
            if not self.valid_type(prm.type):
                self.err(fn, f"unknown type {prm.type!r} for parameter {prm.name}")
            scope[prm.name] = prm.type
        self.fn = fn
        if fn.requires is not None:
            self.contract(fn.requires, [scope], "requires")
        if fn.ensures is not None:
            ens_scope = dict(scope)
            if fn.ret != "void":
                ens_scope["result"] = fn.ret
            self.contract(fn.ensures, [ens_scope], "ensures")
        self.block(fn.body, [dict(scope)])
        if fn.ret != "void" and not _always_returns(fn.body):
            self.err(fn, f"function {fn.name!r} may finish without returning a value")

    def contract(self, e: A.Expr, scopes, kind: str) -> None:
        for sub in A.walk_expr(e):
            if isinstance(sub, A.New):
                self.err(sub, f"{kind} clause must not allocate")
        ty = self.expr(e, scopes)
        if ty is not None and ty != "bool":
            self.err(e, f"{kind} clause must be bool, found {ty}")

    # -- statements ----------------------------------------------------------

    def lookup(self, scopes, name):
        for s in reversed(scopes):
            if name in s:
                return s[name]
        return None

    def block(self, stmts: list[A.Stmt], scopes) -> None:
        for s in stmts:
            self.stmt(s, scopes)

    def stmt(self, s: A.Stmt, scopes) -> None:
        if isinstance(s, A.Decl):
            if not self.valid_type(s.type):
                self.err(s, f"unknown type {s.type!r}")
            if s.name == "result":
                self.err(s, "'result' is reserved for ensures clauses")
            if self.lookup(scopes, s.name) is not None:
                self.err(s, f"redeclaration of {s.name!r}")
            if s.init is not None:
                ty = self.expr(s.init, scopes)
                if not self.assignable(s.type, ty):
                    self.err(s, f"type mismatch: cannot initialise {s.type} {s.name} with {ty}")
            scopes[-1][s.name] = s.type
        elif isinstance(s, A.Assign):
            target = self.lookup(scopes, s.name)
            ty = self.expr(s.value, scopes)
            if target is None:
                self.err(s, f"undefined variable {s.name!r}")
            elif not self.assignable(target, ty):
                self.err(s, f"type mismatch: cannot assign {ty} to {s.name} ({target})")
        elif isinstance(s, A.Store):
            target = self.expr(s.target, scopes)
            ty = self.expr(s.value, scopes)
            if target is not None and not self.assignable(target, ty):
                self.err(s, f"type mismatch: cannot store {ty} into field {s.target.name} ({target})")
        elif isinstance(s, A.If):
            self.cond(s.cond, scopes, "if")
            self.block(s.then, scopes + [{}])
            self.block(s.orelse, scopes + [{}])
        elif isinstance(s, A.While):
            self.cond(s.cond, scopes, "while")
            self.block(s.body, scopes + [{}])
        elif isinstance(s, A.Return):
            ret = self.fn.ret
            if s.value is None:
                if ret != "void":
                    self.err(s, f"missing return value in function returning {ret}")
            else:
                ty = self.expr(s.value, scopes)
                if ret == "void":
                    self.err(s, "return with a value in void function")
                elif not self.assignable(ret, ty):
                    self.err(s, f"type mismatch: returning {ty} from function returning {ret}")
        elif isinstance(s, A.Check):
            self.cond(s.cond, scopes, "check")
        elif isinstance(s, A.ExprStmt):
            self.expr(s.expr, scopes)

    def cond(self, e: A.Expr, scopes, what: str) -> None:
        ty = self.expr(e, scopes)
        if ty is not None and ty != "bool":
            self.err(e, f"{what} condition must be bool, found {ty}")

    # -- expressions ---------------------------------------------------------

    def expr(self, e: A.Expr, scopes) -> str | None:
        """Return the expression's type, or None after reporting an error."""
        if isinstance(e, A.IntLit):
            return "int"
        if isinstance(e, A.BoolLit):
            return "bool"
        if isinstance(e, A.NullLit):
            return NULL_T
        if isinstance(e, A.Var):
            ty = self.lookup(scopes, e.name)
            if ty is None:
                self.err(e, f"undefined variable {e.name!r}")
            return ty
        if isinstance(e, A.New):
            if e.record not in self.p.records:
                self.err(e, f"unknown record {e.record!r}")
                return None
            return e.record
        if isinstance(e, A.Field):
            base = self.expr(e.obj, scopes)
            if base is None:
                return None
            rec = self.p.records.get(base)
            if rec is None:
                self.err(e, f"field access .{e.name} on non-record type {base}")
                return None
            fty = rec.field_type(e.name)
            if fty is None:
                self.err(e, f"record {rec.name} has no field {e.name!r}")
            return fty
        if isinstance(e, A.Unary):
            ty = self.expr(e.operand, scopes)
            want = "int" if e.op == "-" else "bool"
            if ty is not None and ty != want:
                self.err(e, f"type mismatch: operator {e.op} expects {want}, found {ty}")
                return None
            return want
        if isinstance(e, A.Binary):
            lt = self.expr(e.left, scopes)
            rt = self.expr(e.right, scopes)
            if lt is None or rt is None:
                return None
            if e.op in ("+", "-", "*", "/", "%", "<", "<=", ">", ">="):
                if lt != "int" or rt != "int":
                    self.err(e, f"type mismatch: operator {e.op} expects int operands, found {lt} and {rt}")
                    return None
                return "int" if e.op in "+-*/%" else "bool"
            if e.op in ("&&", "||"):
                if lt != "bool" or rt != "bool":
                    self.err(e, f"type mismatch: operator {e.op} expects bool operands, found {lt} and {rt}")
                    return None
                return "bool"
            # == and !=
            ok = lt == rt or (lt == NULL_T and rt not in ("int", "bool")) or (
                rt == NULL_T and lt not in ("int", "bool"))
            if not ok:
                self.err(e, f"type mismatch: cannot compare {lt} with {rt}")
                return None
            return "bool"
        if isinstance(e, A.Call):
            fn = self.p.functions.get(e.name)
            arg_types = [self.expr(a, scopes) for a in e.args]
            if fn is None:
                self.err(e, f"call to undefined function {e.name!r}")
                return None
            if len(e.args) != len(fn.params):
                self.err(e, f"{e.name} expects {len(fn.params)} argument(s), got {len(e.args)}")
                return fn.ret
            for a, at, prm in zip(e.args, arg_types, fn.params):
                if not self.assignable(prm.type, at):
                    self.err(a, f"type mismatch: argument {prm.name} of {e.name} expects {prm.type}, found {at}")
            return fn.ret
        raise TypeError(f"unknown expression node {e!r}")


def _always_returns(stmts: list[A.Stmt]) -> bool:
    for s in stmts:
        if isinstance(s, A.Return):
            return True
        if isinstance(s, A.If) and s.orelse and _always_returns(s.then) and _always_returns(s.orelse):
            return True
        if isinstance(s, A.While) and isinstance(s.cond, A.BoolLit) and s.cond.value:
            return True
    return False


def typecheck(p: A.Program) -> list[Diagnostic]:
    """Return diagnostics; an empty list means the program is well-formed."""
    return _Checker(p).run()
