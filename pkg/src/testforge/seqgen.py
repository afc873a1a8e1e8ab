"""Bounded exploration of operation sequences on a stateful record.

Starting from an initial state, every operation whose precondition holds is
applied with a few argument choices, breadth first, up to a maximum
sequence length. After each call the state invariant is re-checked; a call
that breaks it (or faults, or violates its own ensures) ends that sequence
as a failing one. States are identified by their canonical heap form, which
turns the explored sequences into a state graph.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .heapgen import Structure, canonical_form
from .subjectlang import ast as A
from .subjectlang.interp import (
    DEFAULT_STEP_BUDGET,
    Returned,
    StepBoundExceeded,
    eval_call,
    eval_contract,
)
from .subjectlang.values import INT_MAX, INT_MIN, Handle, Heap, Value, default_value
from .testcase import BOUND_EXCEEDED, PASS, judge

INVARIANT_VIOLATION = "InvariantViolation"


class ApiError(ValueError):
    """The API description does not match the program."""


@dataclass(frozen=True)
class Operation:
    name: str
    domains: tuple[tuple[int, int], ...] = ()  # one interval per int parameter after the state


@dataclass(frozen=True)
class ApiSpec:
    state: str
    invariant: str
    operations: tuple[Operation, ...]
    init: Optional[str] = None  # zero-argument function returning the initial state

    def validate(self, p: A.Program) -> None:
        if self.state not in p.records:
            raise ApiError(f"unknown state type {self.state!r}")
        inv = _function(p, self.invariant)
        if [x.type for x in inv.params] != [self.state] or inv.ret != "bool":
            raise ApiError(f"invariant {self.invariant} must take one {self.state} and return bool")
        if self.init is not None:
            f = _function(p, self.init)
            if f.params or f.ret != self.state:
                raise ApiError(f"init {self.init} must take no arguments and return {self.state}")
        for op in self.operations:
            f = _function(p, op.name)
            if not f.params or f.params[0].type != self.state:
                raise ApiError(f"operation {op.name} must take {self.state} first")
            rest = f.params[1:]
            if any(x.type not in ("int", "bool") for x in rest):
                raise ApiError(f"operation {op.name} may only take int/bool arguments after the state")
            n_int = sum(x.type == "int" for x in rest)
            if len(op.domains) not in (0, n_int):
                raise ApiError(f"operation {op.name} needs {n_int} argument interval(s)")


def _function(p: A.Program, name: str) -> A.FunctionDef:
    try:
        return p.function(name)
    except KeyError:
        raise ApiError(f"unknown function {name!r}") from None


Call = tuple[str, tuple[Value, ...]]


@dataclass
class Sequence:
    calls: tuple[Call, ...]
    verdict: str
    message: Optional[str] = None
    state: int = 0  # graph node reached

    def render(self) -> str:
        if not self.calls:
            return "<init>"
        return "; ".join(f"{op}({', '.join(_lit(a) for a in args)})" for op, args in self.calls)


def _lit(v: Value) -> str:
    return "true" if v is True else "false" if v is False else str(v)


@dataclass
class StateGraph:
    nodes: list[tuple] = field(default_factory=list)  # canonical forms, by node id
    failing: set[int] = field(default_factory=set)
    edges: list[tuple[int, str, int]] = field(default_factory=list)
    initial: int = 0
    summaries: list[str] = field(default_factory=list)
    _ids: dict = field(default_factory=dict, repr=False)
    _edge_set: set = field(default_factory=set, repr=False)

    def node(self, key: tuple, summary: str, failing: bool = False) -> int:
        k = (failing, key)
        if k not in self._ids:
            self._ids[k] = len(self.nodes)
            self.nodes.append(key)
            self.summaries.append(summary)
            if failing:
                self.failing.add(self._ids[k])
        return self._ids[k]

    def edge(self, src: int, label: str, dst: int) -> None:
        e = (src, label, dst)
        if e not in self._edge_set:
            self._edge_set.add(e)
            self.edges.append(e)


def _arg_choices(p: A.Program, op: Operation, budget: int, rng: random.Random) -> list[tuple]:
    """Boundary values first, then seeded random draws, ``budget`` tuples at most."""
    params = p.function(op.name).params[1:]
    ints = iter(op.domains or [(INT_MIN, INT_MAX)] * len(params))
    doms = [next(ints) if x.type == "int" else None for x in params]
    if not params:
        return [()]
    out: list[tuple] = []
    seen: set[tuple] = set()
    for i in range(5):
        t = tuple(max(d[0], min(d[1], (d[0], -1, 0, 1, d[1])[i])) if d else bool(i % 2) for d in doms)
        if t not in seen and len(out) < budget:
            seen.add(t)
            out.append(t)
    tries = 0
    while len(out) < budget and tries < 20 * budget:
        tries += 1
        t = tuple(rng.randint(*d) if d else rng.random() < 0.5 for d in doms)
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def _summary(heap: Heap, root: Handle) -> str:
    obj = heap.objects[root.oid]
    return ", ".join(f"{k}={_lit(v)}" for k, v in obj.fields.items() if not isinstance(v, Handle) and v is not None)


def _initial(p: A.Program, api: ApiSpec, step_budget: int) -> tuple[Heap, Handle]:
    if api.init is None:
        heap = Heap()
        rec = p.records[api.state]
        return heap, heap.alloc(rec.name, {f.name: default_value(f.type) for f in rec.fields})
    res = eval_call(p, api.init, [], None, step_budget)
    if not isinstance(res.outcome, Returned) or not isinstance(res.outcome.value, Handle):
        raise ApiError(f"init {api.init} did not return a state")
    return res.heap, res.outcome.value


def explore_sequences(
    p: A.Program,
    api: ApiSpec,
    max_len: int,
    arg_budget: int = 1,
    *,
    seed: int = 0,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> tuple[StateGraph, list[Sequence]]:
    """Every contract-respecting sequence of at most ``max_len`` calls, breadth first.

    Returns the state graph and the sequences in discovery order. Passing
    sequences are extended; failing or bound-exceeded ones are reported and
    not extended.
    """
    api.validate(p)
    rng = random.Random(seed)
    choices = {op.name: _arg_choices(p, op, arg_budget, rng) for op in api.operations}
    heap0, root = _initial(p, api, step_budget)
    ok = eval_call(p, api.invariant, [root], heap0, step_budget)
    if ok.outcome != Returned(True):
        raise ApiError("initial state violates the invariant")
    graph = StateGraph()
    graph.initial = graph.node(canonical_form(Structure(heap0, root)), _summary(heap0, root))
    seqs = [Sequence((), PASS, None, graph.initial)]
    layer = [((), heap0, graph.initial)]
    for _ in range(max_len):
        nxt = []
        for calls, heap, src in layer:
            for op in api.operations:
                for args in choices[op.name]:
                    full = [root, *args]
                    if eval_contract(p, op.name, "requires", full, heap) is False:
                        continue
                    res = eval_call(p, op.name, full, heap, step_budget)
                    verdict, msg = judge(p, op.name, full, res)
                    after = res.heap
                    if verdict == PASS:
                        inv = eval_call(p, api.invariant, [root], after, step_budget)
                        if inv.outcome != Returned(True):
                            verdict = (BOUND_EXCEEDED if isinstance(inv.outcome, StepBoundExceeded)
                                       else INVARIANT_VIOLATION)
                            msg = f"{api.invariant} does not hold after {op.name}"
                    failing = verdict not in (PASS, BOUND_EXCEEDED)
                    dst = graph.node(canonical_form(Structure(after, root)), _summary(after, root), failing)
                    label = f"{op.name}({', '.join(_lit(a) for a in args)})"
                    graph.edge(src, label, dst)
                    seq = Sequence((*calls, (op.name, tuple(args))), verdict, msg, dst)
                    seqs.append(seq)
                    if verdict == PASS:
                        nxt.append((seq.calls, after, dst))
        layer = nxt
    return graph, seqs


def replay_sequence(p: A.Program, api: ApiSpec, calls, step_budget: int = DEFAULT_STEP_BUDGET) -> tuple:
    """Canonical form of the state after running ``calls`` from the initial state."""
    heap, root = _initial(p, api, step_budget)
    for op, args in calls:
        heap = eval_call(p, op, [root, *args], heap, step_budget).heap
    return canonical_form(Structure(heap, root))


def graph_to_dot(g: StateGraph, name: str = "states") -> str:
    """DOT rendering; failing states get a double border."""
    lines = [f"digraph {name} {{", "  node [shape=ellipse];"]
    for i in range(len(g.nodes)):
        attrs = [f'label="s{i}\\n{g.summaries[i]}"']
        if i in g.failing:
            attrs.append("peripheries=2")
        if i == g.initial:
            attrs.append("style=bold")
        lines.append(f"  s{i} [{', '.join(attrs)}];")
    for src, label, dst in g.edges:
        lines.append(f'  s{src} -> s{dst} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"

