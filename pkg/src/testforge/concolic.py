"""Concolic (dynamic symbolic) exploration.

Each input is run twice: once by the compiled interpreter, which is the ground
truth, and once by a tree-walking interpreter that pairs every integer and
boolean with a symbolic expression over the inputs. The second run yields the
path condition; its trace is checked against the first on every execution.

Symbolic inputs are the int and bool parameters plus the int and bool fields of
objects reachable from record parameters in the input heap, named by access
path (``p.x``, ``l.Head.Data``). Heap shape itself stays concrete.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Optional

from . import solver as S
from .subjectlang import ast as A
from .subjectlang.interp import (
    DEFAULT_STEP_BUDGET,
    BranchEvent,
    CheckEvent,
    CheckViolated,
    ExecutionResult,
    Returned,
    RuntimeFault,
    StepBoundExceeded,
    eval_call,
)
from .subjectlang.values import INT_MAX, INT_MIN, Handle, Heap, Value, default_value, tdiv, tmod, wrap32
from .testcase import BOUND_EXCEEDED, CONTRACT_VIOLATION, TestCase, judge

DEFAULT_MAX_CONDITIONS = 250
DEFAULT_MAX_QUERIES = 1000
DEFAULT_SOLVER_BUDGET = 1_000
# Larger symbolic terms are dropped to their concrete value. Loops that feed a
# variable back into itself (lo = (lo + hi) / 2 + 1) otherwise grow terms that
# share structure and explode once walked as trees.
MAX_TERM_SIZE = 200
POLICIES = ("dfs", "bfs")

_BRANCH, _CHECK, _ENSURES, _REQUIRES, _DIVISOR, _CONCRETIZE = (
    "branch", "check", "ensures", "requires", "divisor", "concretize")
_OBLIGATIONS = (_CHECK, _ENSURES)


class DivergenceError(AssertionError):
    """The symbolic run disagreed with the concrete interpreter (an engine bug)."""


@dataclass(frozen=True)
class PathEntry:
    constraint: S.Constraint  # satisfied by the input that produced it
    loc: A.Loc
    depth: int
    kind: str
    negatable: bool = True


@dataclass
class PathCondition:
    entries: list[PathEntry] = field(default_factory=list)
    variables: dict[str, str] = field(default_factory=dict)  # name -> 'int' | 'bool'
    bounded: bool = False  # the path budget cut the run short
    requires_ok: bool = True

    def constraints(self) -> list[S.Constraint]:
        return [e.constraint for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


# -- symbolic interpreter ------------------------------------------------------

class _Ret(Exception):
    def __init__(self, value):
        self.value = value


class _Fault(Exception):
    def __init__(self, kind: str, loc: A.Loc):
        self.kind, self.loc = kind, loc


class _OutOfSteps(Exception):
    pass


class _Abort(Exception):
    def __init__(self, loc: A.Loc, message):
        self.loc, self.message = loc, message


class _PathFull(Exception):
    pass


def _ex(v) -> S.SymExpr:
    return v[1] if v[1] is not None else S.Const(v[0])


class _SymRun:
    def __init__(self, p: A.Program, heap: Heap, shadow: dict, budget: int,
                 max_conditions: int, strict: bool):
        self.p = p
        self.heap = heap
        self.shadow = shadow
        self.budget = budget
        self.max_conditions = max_conditions
        self.strict = strict
        self.steps = 0
        self.events: list = []
        self.entries: list[PathEntry] = []
        self.kind = _BRANCH
        self.negatable = True
        self._sizes: dict[int, tuple[int, object]] = {}
        self.concretized = 0

    # bookkeeping

    def step(self) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise _OutOfSteps

    def add(self, c: S.Constraint, loc: A.Loc, kind: Optional[str] = None,
            negatable: Optional[bool] = None) -> None:
        if len(self.entries) >= self.max_conditions:
            raise _PathFull
        self.entries.append(PathEntry(
            c, loc, len(self.entries), kind or self.kind,
            self.negatable if negatable is None else negatable))

    def size(self, e) -> int:
        hit = self._sizes.get(id(e))
        if hit is not None:
            return hit[0]
        if isinstance(e, (S.Var, S.Const)):
            n = 1
        elif isinstance(e, (S.Neg, S.Div, S.Mod)):
            n = 1 + self.size(e.arg)
        else:
            n = 1 + self.size(e.left) + self.size(e.right)
        self._sizes[id(e)] = (n, e)  # keeps e alive so the id stays valid
        return n

    def cap(self, e):
        if e is not None and self.size(e) > MAX_TERM_SIZE:
            self.concretized += 1
            return None
        return e

    def decide(self, loc: A.Loc, value: bool, sym, kind: Optional[str] = None) -> None:
        if sym is None:
            return
        c = replace(sym, origin=S.Origin(loc, True))
        self.add(c if value else S.negate(c), loc, kind)

    # functions and statements

    def call(self, name: str, args: list) -> tuple:
        fn = self.p.functions[name]
        env = {prm.name: a for prm, a in zip(fn.params, args)}
        try:
            self.block(fn.body, env, name)
        except _Ret as r:
            return r.value
        return (None, None)

    def block(self, stmts, env, fname) -> None:
        for s in stmts:
            self.stmt(s, env, fname)

    def stmt(self, s, env, fname) -> None:
        loc = A.Loc(fname, s.line, s.col)
        if isinstance(s, A.While):
            while True:
                self.step()
                c, sym = self.eval(s.cond, env, fname)
                self.events.append(BranchEvent(loc, c))
                self.decide(loc, c, sym)
                if not c:
                    break
                self.block(s.body, env, fname)
            return
        self.step()
        if isinstance(s, A.If):
            c, sym = self.eval(s.cond, env, fname)
            self.events.append(BranchEvent(loc, c))
            self.decide(loc, c, sym)
            self.block(s.then if c else s.orelse, env, fname)
        elif isinstance(s, A.Check):
            outer, self.kind = self.kind, _CHECK
            try:
                c, sym = self.eval(s.cond, env, fname)
                self.events.append(CheckEvent(loc, c))
                self.decide(loc, c, sym)
            finally:
                self.kind = outer
            if not c and self.strict:
                raise _Abort(loc, s.message)
        elif isinstance(s, A.Return):
            raise _Ret(self.eval(s.value, env, fname) if s.value is not None else (None, None))
        elif isinstance(s, A.Decl):
            env[s.name] = self.eval(s.init, env, fname) if s.init is not None else (default_value(s.type), None)
        elif isinstance(s, A.Assign):
            env[s.name] = self.eval(s.value, env, fname)
        elif isinstance(s, A.Store):
            h = self.eval(s.target.obj, env, fname)[0]
            v = self.eval(s.value, env, fname)
            if h is None:
                raise _Fault("null-dereference", A.Loc(fname, s.target.line, s.target.col))
            self.heap.objects[h.oid].fields[s.target.name] = v[0]
            if v[1] is None:
                self.shadow.pop((h.oid, s.target.name), None)
            else:
                self.shadow[(h.oid, s.target.name)] = v[1]
        elif isinstance(s, A.ExprStmt):
            self.eval(s.expr, env, fname)
        else:
            raise TypeError(f"unknown statement {s!r}")

    # expressions: every value is a (concrete, symbolic-or-None) pair

    def eval(self, e, env, fname) -> tuple:
        if isinstance(e, A.IntLit):
            return (e.value, None)
        if isinstance(e, A.BoolLit):
            return (e.value, None)
        if isinstance(e, A.NullLit):
            return (None, None)
        if isinstance(e, A.Var):
            return env[e.name]
        if isinstance(e, A.Field):
            h = self.eval(e.obj, env, fname)[0]
            if h is None:
                raise _Fault("null-dereference", A.Loc(fname, e.line, e.col))
            return (self.heap.objects[h.oid].fields[e.name], self.shadow.get((h.oid, e.name)))
        if isinstance(e, A.New):
            rec = self.p.records[e.record]
            return (self.heap.alloc(rec.name, {f.name: default_value(f.type) for f in rec.fields}), None)
        if isinstance(e, A.Unary):
            c, sym = self.eval(e.operand, env, fname)
            if e.op == "-":
                return (wrap32(-c), S.linearize(S.Neg(sym)) if sym is not None else None)
            return (not c, S.negate(sym) if sym is not None else None)
        if isinstance(e, A.Call):
            args = [self.eval(a, env, fname) for a in e.args]
            return self.call(e.name, args)
        if isinstance(e, A.Binary):
            return self.binary(e, env, fname)
        raise TypeError(f"unknown expression {e!r}")

    def binary(self, e: A.Binary, env, fname) -> tuple:
        op = e.op
        loc = A.Loc(fname, e.line, e.col)
        if op in ("&&", "||"):
            lc, lsym = self.eval(e.left, env, fname)
            self.events.append(BranchEvent(loc, lc))
            self.decide(loc, lc, lsym)
            if lc == (op == "&&"):
                return self.eval(e.right, env, fname)
            return (lc, None)
        left = self.eval(e.left, env, fname)
        right = self.eval(e.right, env, fname)
        (lc, ls), (rc, rs) = left, right
        if op in ("+", "-", "*"):
            c = wrap32(lc + rc if op == "+" else lc - rc if op == "-" else lc * rc)
            if ls is None and rs is None:
                return (c, None)
            node = {"+": S.Add, "-": S.Sub, "*": S.Mul}[op](_ex(left), _ex(right))
            return (c, self.cap(S.linearize(node)))
        if op in ("/", "%"):
            if rs is not None:
                # the divisor stays concrete; whether it is zero is a branch of its own
                self.decide(loc, rc != 0, S.Constraint("!=", rs, S.Const(0)), _DIVISOR)
                if rc != 0:
                    self.add(S.Constraint("==", rs, S.Const(rc)), loc, _CONCRETIZE, False)
            if rc == 0:
                raise _Fault("div-by-zero", loc)
            c = wrap32(tdiv(lc, rc)) if op == "/" else wrap32(tmod(lc, rc))
            if ls is None:
                return (c, None)
            return (c, self.cap((S.Div if op == "/" else S.Mod)(ls, rc)))
        # comparisons
        c = S._compare(op, lc, rc)
        if ls is None and rs is None:
            return (c, None)
        if isinstance(lc, bool):
            return (c, self._bool_eq(op, left, right))
        return (c, S.Constraint(op, _ex(left), _ex(right)))

    @staticmethod
    def _bool_eq(op: str, left, right):
        (lc, ls), (rc, rs) = left, right
        if ls is not None and rs is not None:
            return None  # not expressible as one constraint; stays concrete
        sym, other = (ls, rc) if ls is not None else (rs, lc)
        same = sym if other else S.negate(sym)
        return same if op == "==" else S.negate(same)


# -- inputs ----------------------------------------------------------------------

@dataclass
class _Input:
    args: list[Value]
    heap: Heap
    sites: dict[str, tuple] = field(default_factory=dict)  # name -> ('arg', i) | ('field', oid, name)
    kinds: dict[str, str] = field(default_factory=dict)


def _symbolic_sites(p: A.Program, fn: A.FunctionDef, args: list[Value], heap: Heap) -> _Input:
    """Name every symbolic input: scalar parameters and scalar fields by access path."""
    inp = _Input(list(args), heap)
    queue: list[tuple[str, Handle]] = []
    for i, (prm, a) in enumerate(zip(fn.params, args)):
        if prm.type in ("int", "bool"):
            inp.sites[prm.name] = ("arg", i)
            inp.kinds[prm.name] = prm.type
        elif isinstance(a, Handle):
            queue.append((prm.name, a))
    seen: set[int] = set()
    while queue:
        path, h = queue.pop(0)
        if h.oid in seen:
            continue
        seen.add(h.oid)
        obj = heap.objects[h.oid]
        rec = p.records[obj.record]
        for f in rec.fields:
            name = f"{path}.{f.name}"
            if f.type in ("int", "bool"):
                inp.sites[name] = ("field", h.oid, f.name)
                inp.kinds[name] = f.type
            elif isinstance(obj.fields[f.name], Handle):
                queue.append((name, obj.fields[f.name]))
    return inp


def _input_value(inp: _Input, name: str) -> int:
    site = inp.sites[name]
    v = inp.args[site[1]] if site[0] == "arg" else inp.heap.objects[site[1]].fields[site[2]]
    return int(v)


def _instantiate(inp: _Input, model: dict[str, int]) -> tuple[list[Value], Heap]:
    args = list(inp.args)
    heap = inp.heap.copy()
    for name, v in model.items():
        site = inp.sites.get(name)
        if site is None:
            continue
        val = (v != 0) if inp.kinds[name] == "bool" else v
        if site[0] == "arg":
            args[site[1]] = val
        else:
            heap.objects[site[1]].fields[site[2]] = val
    return args, heap


def _sym_of(name: str, kind: str):
    v = S.Var(name)
    return S.Constraint("!=", v, S.Const(0)) if kind == "bool" else v


# -- single execution --------------------------------------------------------------

def _execute(p: A.Program, fn: str, args: list[Value], heap: Optional[Heap], *,
             max_conditions: int, step_budget: int, strict: bool):
    fdef = p.function(fn)
    heap = Heap() if heap is None else heap
    concrete = eval_call(p, fn, list(args), heap, step_budget, strict=strict)
    inp = _symbolic_sites(p, fdef, args, heap)
    shadow = {}
    sym_args = []
    for i, (prm, a) in enumerate(zip(fdef.params, args)):
        sym_args.append((a, _sym_of(prm.name, prm.type) if prm.name in inp.sites else None))
    for name, site in inp.sites.items():
        if site[0] == "field":
            shadow[(site[1], site[2])] = _sym_of(name, inp.kinds[name])
    pc = PathCondition(variables=dict(inp.kinds))
    run = _SymRun(p, heap.copy(), shadow, step_budget, max_conditions, strict)

    # the precondition: its constraints are assumptions once it holds
    if fdef.requires is not None:
        ok = _contract(run, fdef, fdef.requires, sym_args, None, _REQUIRES)
        if ok is None:
            pc.bounded = True
        else:
            pc.requires_ok = ok
            for i, e in enumerate(run.entries):
                if e.kind == _REQUIRES:
                    run.entries[i] = replace(e, negatable=not ok)
    if pc.requires_ok and not pc.bounded:
        outcome = None
        try:
            value = run.call(fn, sym_args)
            outcome = Returned(value[0])
        except _PathFull:
            pc.bounded = True
        except _OutOfSteps:
            outcome = StepBoundExceeded()
        except _Fault as f:
            outcome = RuntimeFault(f.kind, f.loc)
        except _Abort as a:
            outcome = CheckViolated(a.loc, a.message)
        if not pc.bounded:
            steps = min(run.steps, step_budget)
            if (outcome != concrete.outcome or run.events != concrete.trace.events
                    or steps != concrete.steps):
                raise DivergenceError(f"symbolic run of {fn}{tuple(args)} disagrees with the interpreter")
            if isinstance(outcome, Returned) and fdef.ensures is not None:
                if _contract(run, fdef, fdef.ensures, sym_args, value, _ENSURES) is None:
                    pc.bounded = True
        elif run.events != concrete.trace.events[:len(run.events)]:
            raise DivergenceError(f"symbolic run of {fn}{tuple(args)} left the concrete path")
    pc.entries = run.entries
    model = {n: _input_value(inp, n) for n in inp.sites}
    for e in pc.entries:
        if not S.holds(e.constraint, model):
            raise DivergenceError(f"path constraint {e.constraint} fails on its own input")
    return concrete, pc, inp


def _contract(run: _SymRun, fdef: A.FunctionDef, clause: A.Expr, sym_args, result, kind) -> Optional[bool]:
    """Evaluate a contract symbolically on scratch state; None if the path budget ran out."""
    env = {prm.name: a for prm, a in zip(fdef.params, sym_args)}
    if result is not None:
        env["result"] = result
    saved = (run.heap, run.shadow, run.steps, run.events, run.kind)
    run.heap, run.shadow = run.heap.copy(), dict(run.shadow)
    run.steps, run.events, run.kind = 0, [], kind
    loc = A.Loc(fdef.name, clause.line, clause.col)
    try:
        c, sym = run.eval(clause, env, fdef.name)
        run.decide(loc, c, sym)
        return bool(c)
    except _PathFull:
        return None
    except (_Fault, _OutOfSteps, _Abort):
        return False
    finally:
        run.heap, run.shadow, run.steps, run.events, run.kind = saved


def execute_symbolic(
    p: A.Program,
    fn: str,
    args: list[Value],
    heap: Optional[Heap] = None,
    *,
    max_conditions: int = DEFAULT_MAX_CONDITIONS,
    step_budget: int = DEFAULT_STEP_BUDGET,
    strict: bool = False,
) -> tuple[ExecutionResult, PathCondition]:
    """Run ``fn`` concretely and symbolically; return the concrete result and the path condition."""
    res, pc, _ = _execute(p, fn, list(args), heap, max_conditions=max_conditions,
                          step_budget=step_budget, strict=strict)
    return res, pc


# -- exploration -------------------------------------------------------------------

@dataclass
class Limits:
    policy: str = "dfs"
    max_conditions: int = DEFAULT_MAX_CONDITIONS
    max_queries: int = DEFAULT_MAX_QUERIES
    max_runs: int = 10_000
    step_budget: int = DEFAULT_STEP_BUDGET
    solver_budget: int = DEFAULT_SOLVER_BUDGET
    strict: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown search policy {self.policy!r}; expected one of {POLICIES}")


class _Node:
    """Trie of explored path conditions, keyed by constraint."""

    __slots__ = ("children", "tried")

    def __init__(self):
        self.children: dict[S.Constraint, _Node] = {}
        self.tried: set[S.Constraint] = set()


@dataclass
class Target:
    node: _Node
    prefix: tuple[S.Constraint, ...]
    flipped: S.Constraint
    depth: int
    loc: A.Loc
    kind: str
    template: _Input
    seq: int

    @property
    def side(self) -> tuple[A.Loc, bool]:
        return (self.loc, self.flipped.origin.polarity if self.flipped.origin else True)


@dataclass
class ExplorationState:
    limits: Limits = field(default_factory=Limits)
    frontier: list = field(default_factory=list)  # heap of (priority, seq, target)
    covered: set = field(default_factory=set)  # (path signature, ensures violated)
    sides: set = field(default_factory=set)  # (loc, polarity) reached by some path
    paths: int = 0
    infeasible: int = 0
    unresolved: int = 0
    bound_exceeded: int = 0
    diverged: int = 0
    rejected: int = 0  # inputs failing the precondition
    queries: int = 0
    runs: int = 0
    history: list = field(default_factory=list)
    refuted: list = field(default_factory=list)  # constraint lists counted infeasible
    root: _Node = field(default_factory=_Node)
    _seq: int = 0

    def priority(self, t: Target) -> tuple:
        # heapq pops the smallest, so the preferred target gets the smallest key
        urgent = t.kind in _OBLIGATIONS and t.side not in self.sides
        if self.limits.policy == "dfs":
            return (not urgent, -t.depth, -t.seq)
        return (not urgent, t.depth, t.seq)

    def push(self, t: Target) -> None:
        heapq.heappush(self.frontier, (self.priority(t), t.seq, t))

    def counters(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in (
            "paths", "infeasible", "unresolved", "bound_exceeded", "diverged",
            "rejected", "queries", "runs")}


def choose_next(state: ExplorationState) -> Optional[Target]:
    """Pop the next negation target, or None when the frontier is exhausted.

    Check and ensures obligations whose other side no path has reached yet go
    first; otherwise DFS takes the deepest target (latest first) and BFS the
    shallowest (earliest first). Targets already covered or tried are dropped.
    """
    while state.frontier:
        prio, _, t = heapq.heappop(state.frontier)
        now = state.priority(t)
        if now != prio:
            # an obligation met since it was queued; requeue at its real rank
            heapq.heappush(state.frontier, (now, t.seq, t))
            continue
        if t.flipped in t.node.children or t.flipped in t.node.tried:
            continue
        t.node.tried.add(t.flipped)
        return t
    return None


def _opposes(c: S.Constraint, prefix) -> bool:
    """True when some prefix constraint is the syntactic negation of ``c``."""
    neg = S.negate(c)
    return any(p.rel == neg.rel and p.lhs == neg.lhs and p.rhs == neg.rhs for p in prefix)


def default_seeds(p: A.Program, fn: str) -> list[tuple[list[Value], Optional[Heap]]]:
    """Zero scalars with null records, then (if any record parameter) fresh all-default objects."""
    fdef = p.function(fn)
    base = [default_value(prm.type) for prm in fdef.params]
    seeds: list[tuple[list[Value], Optional[Heap]]] = [(base, None)]
    if any(prm.type in p.records for prm in fdef.params):
        heap = Heap()
        args = []
        for prm in fdef.params:
            if prm.type in p.records:
                rec = p.records[prm.type]
                args.append(heap.alloc(rec.name, {f.name: default_value(f.type) for f in rec.fields}))
            else:
                args.append(default_value(prm.type))
        seeds.append((args, heap))
    return seeds


def explore(
    p: A.Program,
    fn: str,
    limits: Optional[Limits] = None,
    seed_inputs: Optional[list[tuple[list[Value], Optional[Heap]]]] = None,
    domains: Optional[dict[str, tuple[int, int]]] = None,
) -> tuple[list[TestCase], ExplorationState]:
    """Generate test cases for ``fn`` by repeatedly negating path constraints.

    ``domains`` optionally narrows symbolic inputs by name (``x``, ``p.x``);
    the rest range over all of int32. Solver queries always include the
    path's precondition constraints, so generated inputs satisfy ``requires``.
    """
    limits = limits or Limits()
    state = ExplorationState(limits)
    domains = dict(domains or {})
    fdef = p.function(fn)
    cases: list[TestCase] = []

    def run_input(args, heap, bound: int, target: Optional[Target]) -> None:
        state.runs += 1
        res, pc, inp = _execute(p, fn, args, heap, max_conditions=limits.max_conditions,
                                step_budget=limits.step_budget, strict=limits.strict)
        node = state.root
        for e in pc.entries:
            state.sides.add((e.loc, e.constraint.origin.polarity if e.constraint.origin else True))
            node = node.children.setdefault(e.constraint, _Node())
        if target is not None:
            expected = (*target.prefix, target.flipped)
            if tuple(pc.constraints()[:len(expected)]) != expected:
                state.diverged += 1
        if not pc.requires_ok:
            state.rejected += 1
        else:
            sig = res.trace.signature()
            verdict, msg = judge(p, fn, args, res, path_bound=pc.bounded)
            # the ensures clause acts as one more branch at the end of the path
            key = (sig, verdict == CONTRACT_VIOLATION)
            if key not in state.covered:
                state.covered.add(key)
                snapshot = heap.copy() if heap is not None else None
                cases.append(TestCase(fn, tuple(args), snapshot, res.outcome, verdict, msg,
                                      "concolic", sig, pc.bounded, fdef.ret == "void"))
                state.paths += 1
                if verdict == BOUND_EXCEEDED:
                    state.bound_exceeded += 1
        node = state.root
        prefix: list[S.Constraint] = []
        for e in pc.entries:
            if e.depth > bound and e.negatable:
                state._seq += 1
                state.push(Target(node, tuple(prefix), S.negate(e.constraint), e.depth,
                                  e.loc, e.kind, inp, state._seq))
            prefix.append(e.constraint)
            node = node.children[e.constraint]

    for args, heap in (seed_inputs or default_seeds(p, fn)):
        if state.runs >= limits.max_runs:
            break
        run_input(list(args), heap, -1, None)

    while state.queries < limits.max_queries and state.runs < limits.max_runs:
        t = choose_next(state)
        if t is None:
            break
        # the same condition already decided the other way on this prefix
        if _opposes(t.flipped, t.prefix):
            state.infeasible += 1
            state.refuted.append((*t.prefix, t.flipped))
            continue
        state.queries += 1
        state.history.append((t.depth, str(t.loc), t.side[1], t.kind))
        cs = [*t.prefix, t.flipped]
        names = {}
        for c in cs:
            S.variables(c, names)
        doms = {}
        for n in names:
            kind = t.template.kinds.get(n, "int")
            doms[n] = (0, 1) if kind == "bool" else domains.get(n, (INT_MIN, INT_MAX))
        r = S.solve(cs, doms, limits.solver_budget)
        if r.status == S.UNSAT:
            state.infeasible += 1
            state.refuted.append(tuple(cs))
            continue
        if r.status == S.UNKNOWN:
            state.unresolved += 1
            continue
        args, heap = _instantiate(t.template, r.model)
        run_input(args, heap if heap.objects else None, t.depth, t)
    return cases, state
