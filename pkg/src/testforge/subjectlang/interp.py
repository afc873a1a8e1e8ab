"""Instrumented concrete interpreter.

Each program is translated once into Python source (one Python function per
subject function) and cached; each run gets a fresh :class:`_Ctx` carrying the
step counter, the branch/check trace, the statement hit map and the heap.

Step accounting: every executed statement costs one step, and a ``while`` costs
one step per evaluation of its condition. The run stops with
:class:`StepBoundExceeded` as soon as the count would exceed the budget.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from . import ast as A
from .values import Handle, Heap, Value, default_value, tdiv, tmod, wrap32

DEFAULT_STEP_BUDGET = 10**6


class BranchEvent(NamedTuple):
    loc: A.Loc
    taken: bool


class CheckEvent(NamedTuple):
    loc: A.Loc
    value: bool


Event = Union[BranchEvent, CheckEvent]


@dataclass(frozen=True)
class Returned:
    value: Value


@dataclass(frozen=True)
class CheckViolated:
    loc: A.Loc
    message: Optional[str] = None


@dataclass(frozen=True)
class RuntimeFault:
    kind: str  # 'div-by-zero' | 'null-dereference'
    loc: A.Loc


@dataclass(frozen=True)
class StepBoundExceeded:
    pass


Outcome = Union[Returned, CheckViolated, RuntimeFault, StepBoundExceeded]


@dataclass
class Trace:
    events: list[Event] = field(default_factory=list)
    statements: frozenset[A.Loc] = frozenset()
    # every failing check event the program can emit, when known; lets long
    # traces without failures skip the full scan
    watch: Optional[tuple[CheckEvent, ...]] = field(default=None, compare=False, repr=False)

    def signature(self) -> tuple[Event, ...]:
        return tuple(self.events)

    def failed_checks(self) -> list[CheckEvent]:
        if self.watch is not None and not any(e in self.events for e in self.watch):
            return []
        return [e for e in self.events if isinstance(e, CheckEvent) and not e.value]


@dataclass
class ExecutionResult:
    outcome: Outcome
    trace: Trace
    steps: int
    heap: Heap


class _OutOfSteps(Exception):
    pass


class _Fault(Exception):
    def __init__(self, kind: str, loc: A.Loc):
        self.kind = kind
        self.loc = loc


class _CheckAbort(Exception):
    def __init__(self, loc: A.Loc, message: Optional[str]):
        self.loc = loc
        self.message = message


class _Ctx:
    __slots__ = ("steps", "budget", "trace", "hits", "heap", "strict", "reads")

    def __init__(self, heap: Heap, budget: int, nstmts: int, strict: bool, reads):
        self.steps = 0
        self.budget = budget
        self.trace: list = []
        self.hits = bytearray(nstmts)
        self.heap = heap
        self.strict = strict
        self.reads = reads


_I_MIN, _I_MAX = -(1 << 31), (1 << 31) - 1


def _w(v: int) -> int:
    return v if _I_MIN <= v <= _I_MAX else wrap32(v)


def _load(ctx, h, name, loc):
    if h is None:
        raise _Fault("null-dereference", loc)
    if ctx.reads is not None:
        ctx.reads.append((h.oid, name))
    return ctx.heap.objects[h.oid].fields[name]


def _store(ctx, h, name, value, loc):
    if h is None:
        raise _Fault("null-dereference", loc)
    ctx.heap.objects[h.oid].fields[name] = value


def _div(a, b, loc):
    if b > 0 and a >= 0:
        return a // b
    if b == 0:
        raise _Fault("div-by-zero", loc)
    return wrap32(tdiv(a, b))


def _mod(a, b, loc):
    if b > 0 and a >= 0:
        return a % b
    if b == 0:
        raise _Fault("div-by-zero", loc)
    return tmod(a, b)


_ARITH = {"+", "-", "*"}
_REL = {"<", "<=", ">", ">=", "==", "!="}


class CompiledProgram:
    """A program translated to Python source, one Python function per subject function.

    Subject variables become Python locals prefixed with ``v_``; every statement
    is preceded by the inlined step check and statement-hit marker.
    """

    def __init__(self, prog: A.Program):
        self.prog = prog
        self.stmt_locs: list[A.Loc] = []
        self.ns: dict = {
            "_w": _w, "_load": _load, "_store": _store, "_div": _div, "_mod": _mod,
            "_OutOfSteps": _OutOfSteps, "_CheckAbort": _CheckAbort,
        }
        self._consts: dict = {}
        self._tmp = 0
        self.check_failures: list[CheckEvent] = []
        chunks = []
        for fn in prog.functions.values():
            self._fname = fn.name
            chunks.append(self._function(fn))
            for kind in ("requires", "ensures"):
                clause = getattr(fn, kind)
                if clause is not None:
                    chunks.append(self._contract(fn, kind, clause))
        self.source = "\n".join(chunks)
        exec(compile(self.source, f"<subject program {id(prog):x}>", "exec"), self.ns)
        self.funcs = {name: self.ns[f"F_{name}"] for name in prog.functions}
        self.contracts = {
            (name, kind): self.ns[f"C_{kind}_{name}"]
            for name, fn in prog.functions.items()
            for kind in ("requires", "ensures")
            if getattr(fn, kind) is not None
        }

    def _const(self, value, hint: str) -> str:
        # NamedTuple events compare equal to plain tuples, so key on the type too
        key = (hint, type(value).__name__, value)
        name = self._consts.get(key)
        if name is None:
            name = f"K{len(self._consts)}_{hint}"
            self._consts[key] = name
            self.ns[name] = value
        return name

    def _loc(self, node) -> A.Loc:
        return A.Loc(self._fname, node.line, node.col)

    def _temp(self) -> str:
        self._tmp += 1
        return f"t{self._tmp}"

    # -- functions -----------------------------------------------------------

    def _function(self, fn: A.FunctionDef) -> str:
        # S is a frame-local step counter; it is written back to ctx.steps around
        # calls and on exit so callees continue the same count.
        params = "".join(f", v_{p.name}" for p in fn.params)
        lines = [
            f"def F_{fn.name}(ctx{params}):",
            "    B = ctx.budget; H = ctx.hits; ap = ctx.trace.append; S = ctx.steps",
            "    try:",
        ]
        lines += self._block(fn.body, 2)
        lines += [
            "        ctx.steps = S",
            "        return None",
            "    except BaseException:",
            "        if S > ctx.steps: ctx.steps = S",
            "        raise",
        ]
        return "\n".join(lines) + "\n"

    def _contract(self, fn: A.FunctionDef, kind: str, clause: A.Expr) -> str:
        params = "".join(f", v_{p.name}" for p in fn.params)
        if kind == "ensures":
            params += ", v_result=None"
        return (
            f"def C_{kind}_{fn.name}(ctx{params}):\n"
            f"    ap = ctx.trace.append\n"
            f"    return {self._expr(clause)}\n"
        )

    def _block(self, stmts, depth: int) -> list[str]:
        out = []
        for s in stmts:
            out += self._stmt(s, depth)
        return out

    # -- statements ----------------------------------------------------------

    def _step(self, s, pad: str) -> list[str]:
        sid = len(self.stmt_locs)
        self.stmt_locs.append(self._loc(s))
        return [f"{pad}S += 1", f"{pad}if S > B: raise _OutOfSteps", f"{pad}H[{sid}] = 1"]

    def _stmt(self, s: A.Stmt, depth: int) -> list[str]:
        pad = "    " * depth
        calls = any(isinstance(x, A.Call) for e in A.stmt_exprs(s) for x in A.walk_expr(e))
        sync_out = [f"{pad}ctx.steps = S"] if calls else []
        sync_in = [f"{pad}    S = ctx.steps"] if calls else []
        if isinstance(s, A.While):
            loc = self._loc(s)
            ev_t = self._const(BranchEvent(loc, True), "ev")
            ev_f = self._const(BranchEvent(loc, False), "ev")
            inner = pad + "    "
            out = [f"{pad}while True:"] + self._step(s, inner)
            out += ["    " + x for x in sync_out]
            out += [f"{inner}if {self._expr(s.cond)}:"] + ["    " + x for x in sync_in] + [
                f"{inner}    ap({ev_t})",
                f"{inner}else:",
            ] + ["    " + x for x in sync_in] + [
                f"{inner}    ap({ev_f})",
                f"{inner}    break",
            ]
            out += self._block(s.body, depth + 1)
            return out

        out = self._step(s, pad)
        if isinstance(s, (A.If, A.Check)):
            loc = self._loc(s)
            kind = BranchEvent if isinstance(s, A.If) else CheckEvent
            ev_t = self._const(kind(loc, True), "ev")
            ev_f = self._const(kind(loc, False), "ev")
            if kind is CheckEvent:
                self.check_failures.append(kind(loc, False))
            out += sync_out
            out.append(f"{pad}if {self._expr(s.cond)}:")
            out += sync_in + [f"{pad}    ap({ev_t})"]
            if isinstance(s, A.If):
                out += self._block(s.then, depth + 1)
            out += [f"{pad}else:"] + sync_in + [f"{pad}    ap({ev_f})"]
            if isinstance(s, A.If):
                out += self._block(s.orelse, depth + 1)
            else:
                cloc = self._const(loc, "loc")
                msg = self._const(s.message, "msg")
                out.append(f"{pad}    if ctx.strict: raise _CheckAbort({cloc}, {msg})")
            return out
        if isinstance(s, A.Return):
            value = self._expr(s.value) if s.value is not None else "None"
            return out + [f"{pad}ctx.steps = S", f"{pad}return {value}"]
        if isinstance(s, A.Decl):
            init = self._expr(s.init) if s.init is not None else repr(default_value(s.type))
            line = f"{pad}v_{s.name} = {init}"
        elif isinstance(s, A.Assign):
            line = f"{pad}v_{s.name} = {self._expr(s.value)}"
        elif isinstance(s, A.Store):
            loc = self._const(self._loc(s.target), "loc")
            line = f"{pad}_store(ctx, {self._expr(s.target.obj)}, {s.target.name!r}, {self._expr(s.value)}, {loc})"
        elif isinstance(s, A.ExprStmt):
            line = f"{pad}{self._expr(s.expr)}"
        else:
            raise TypeError(f"unknown statement {s!r}")
        return out + sync_out + [line] + [x[4:] for x in sync_in]

    # -- expressions ---------------------------------------------------------

    def _expr(self, e: A.Expr) -> str:
        if isinstance(e, A.IntLit):
            return f"({e.value})"
        if isinstance(e, A.BoolLit):
            return "True" if e.value else "False"
        if isinstance(e, A.NullLit):
            return "None"
        if isinstance(e, A.Var):
            return f"v_{e.name}"
        if isinstance(e, A.Field):
            loc = self._const(self._loc(e), "loc")
            return f"_load(ctx, {self._expr(e.obj)}, {e.name!r}, {loc})"
        if isinstance(e, A.New):
            rec = self.prog.records[e.record]
            defaults = self._const(tuple((f.name, default_value(f.type)) for f in rec.fields), "defaults")
            return f"ctx.heap.alloc({rec.name!r}, dict({defaults}))"
        if isinstance(e, A.Unary):
            inner = self._expr(e.operand)
            return f"_w(-{inner})" if e.op == "-" else f"(not {inner})"
        if isinstance(e, A.Call):
            args = "".join(f", {self._expr(a)}" for a in e.args)
            return f"F_{e.name}(ctx{args})"
        if isinstance(e, A.Binary):
            left, right, op = self._expr(e.left), self._expr(e.right), e.op
            if op in ("&&", "||"):
                loc = self._loc(e)
                ev_t = self._const(BranchEvent(loc, True), "ev")
                ev_f = self._const(BranchEvent(loc, False), "ev")
                # ap() returns None, so `ap(x) or y` evaluates to y
                if op == "&&":
                    return f"((ap({ev_t}) or {right}) if {left} else (ap({ev_f}) or False))"
                return f"((ap({ev_t}) or True) if {left} else (ap({ev_f}) or {right}))"
            if op in _ARITH:
                t = self._temp()
                return f"({t} if -2147483648 <= ({t} := {left} {op} {right}) <= 2147483647 else _w({t}))"
            if op in ("/", "%"):
                loc = self._const(self._loc(e), "loc")
                helper = "_div" if op == "/" else "_mod"
                if isinstance(e.right, A.IntLit) and e.right.value > 0:
                    t = self._temp()
                    py_op = "//" if op == "/" else "%"
                    return f"({t} {py_op} {right} if ({t} := {left}) >= 0 else {helper}({t}, {right}, {loc}))"
                return f"{helper}({left}, {right}, {loc})"
            if op in _REL:
                return f"({left} {op} {right})"
        raise TypeError(f"unknown expression {e!r}")


_cache: "weakref.WeakKeyDictionary[A.Program, CompiledProgram]" = weakref.WeakKeyDictionary()


def compiled(p: A.Program) -> CompiledProgram:
    cp = _cache.get(p)
    if cp is None:
        cp = _cache[p] = CompiledProgram(p)
    return cp


def eval_call(
    p: A.Program,
    fn: str,
    args: list[Value],
    heap: Optional[Heap] = None,
    step_budget: int = DEFAULT_STEP_BUDGET,
    *,
    strict: bool = False,
    copy_heap: bool = True,
    reads: Optional[list] = None,
) -> ExecutionResult:
    """Run ``fn`` on concrete arguments and return outcome, trace and final heap.

    The caller's heap is left untouched unless ``copy_heap`` is false. When
    ``reads`` is a list, every field load appends ``(object id, field)`` to it.
    """
    cp = compiled(p)
    fdef = p.function(fn)
    if len(args) != len(fdef.params):
        raise TypeError(f"{fn} expects {len(fdef.params)} argument(s), got {len(args)}")
    if heap is None:
        heap = Heap()
    elif copy_heap:
        heap = heap.copy()
    for a in args:
        if isinstance(a, Handle) and a.oid not in heap.objects:
            raise ValueError(f"dangling handle {a!r} passed to {fn}")
    ctx = _Ctx(heap, step_budget, len(cp.stmt_locs), strict, reads)
    try:
        outcome: Outcome = Returned(cp.funcs[fn](ctx, *args))
    except _OutOfSteps:
        ctx.steps = step_budget
        outcome = StepBoundExceeded()
    except _Fault as f:
        outcome = RuntimeFault(f.kind, f.loc)
    except _CheckAbort as c:
        outcome = CheckViolated(c.loc, c.message)
    stmts = frozenset(loc for loc, hit in zip(cp.stmt_locs, ctx.hits) if hit)
    return ExecutionResult(outcome, Trace(ctx.trace, stmts, tuple(cp.check_failures)), ctx.steps, heap)


def eval_contract(
    p: A.Program,
    fn: str,
    kind: str,
    args: list[Value],
    heap: Heap,
    result: Value = None,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> Optional[bool]:
    """Evaluate the requires/ensures clause of ``fn``.

    Returns None when the clause is absent; a clause that faults or runs out of
    steps counts as false.
    """
    cp = compiled(p)
    clause = cp.contracts.get((fn, kind))
    if clause is None:
        return None
    ctx = _Ctx(heap.copy(), step_budget, len(cp.stmt_locs), False, None)
    extra = (result,) if kind == "ensures" else ()
    try:
        return bool(clause(ctx, *args, *extra))
    except (_Fault, _OutOfSteps, _CheckAbort):
        return False
