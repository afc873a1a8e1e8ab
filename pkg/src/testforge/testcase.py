"""Generated test cases and the verdicts shared by every generation strategy."""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Optional

from .subjectlang import ast as A
from .subjectlang.interp import (
    DEFAULT_STEP_BUDGET,
    BranchEvent,
    CheckEvent,
    CheckViolated,
    ExecutionResult,
    Outcome,
    Returned,
    RuntimeFault,
    StepBoundExceeded,
    eval_call,
    eval_contract,
)
from .subjectlang.values import Handle, Heap, HeapObject, Value, render_value

PASS = "Pass"
CONTRACT_VIOLATION = "ContractViolation"
CHECK_VIOLATION = "CheckViolation"
RUNTIME_ERROR = "RuntimeError"
BOUND_EXCEEDED = "BoundExceeded"
VERDICTS = (PASS, CONTRACT_VIOLATION, CHECK_VIOLATION, RUNTIME_ERROR, BOUND_EXCEEDED)
FINDINGS = (CONTRACT_VIOLATION, CHECK_VIOLATION)


@dataclass
class TestCase:
    """One generated input with the observed outcome and its verdict.

    ``heap`` is the input heap (before the call); ``args`` may hold handles
    into it. ``path_bound`` marks inputs whose symbolic path exceeded the
    branch budget, which turns an otherwise passing run into BoundExceeded.
    """

    __test__ = False  # not a pytest class

    function: str
    args: tuple[Value, ...]
    heap: Optional[Heap]
    outcome: Outcome
    verdict: str
    message: Optional[str] = None
    provenance: str = ""
    signature: tuple = ()
    path_bound: bool = False
    void: bool = False  # the function returns nothing

    def render_args(self) -> str:
        return ", ".join(render_value(a, self.heap) for a in self.args)

    def render_outcome(self) -> str:
        return render_outcome(self.outcome, self.heap, void=self.void)


def render_outcome(o: Outcome, heap: Optional[Heap] = None, *, void: bool = False) -> str:
    if isinstance(o, Returned):
        return "void" if void else render_value(o.value, heap)
    if isinstance(o, CheckViolated):
        return f"check failed at {o.loc}"
    if isinstance(o, RuntimeFault):
        return f"{o.kind} at {o.loc}"
    return "step bound exceeded"


_MESSAGES: "weakref.WeakKeyDictionary[A.Program, dict]" = weakref.WeakKeyDictionary()


def check_message(p: A.Program, loc: A.Loc) -> Optional[str]:
    """Message attached to the ``check`` statement at ``loc``, if any."""
    table = _MESSAGES.get(p)
    if table is None:
        table = {}
        for fn in p.functions.values():
            for s in A.walk_stmts(fn.body):
                if isinstance(s, A.Check):
                    table[A.loc_of(fn.name, s)] = s.message
        _MESSAGES[p] = table
    return table.get(loc)


def judge(
    p: A.Program,
    fn: str,
    args: list[Value] | tuple[Value, ...],
    result: ExecutionResult,
    *,
    path_bound: bool = False,
) -> tuple[str, Optional[str]]:
    """Derive (verdict, message) from an execution of ``fn`` on ``args``.

    A failed check anywhere on the path wins, since it happens first; then
    the ensures clause, runtime faults and the step bound.
    """
    o = result.outcome
    failed = result.trace.failed_checks()
    if isinstance(o, CheckViolated) or failed:
        loc = o.loc if isinstance(o, CheckViolated) else failed[0].loc
        msg = check_message(p, loc)
        return CHECK_VIOLATION, f"{msg} ({loc})" if msg else f"check failed at {loc}"
    if isinstance(o, Returned):
        ok = eval_contract(p, fn, "ensures", list(args), result.heap, result=o.value)
        if ok is False:
            return CONTRACT_VIOLATION, "ensures violated"
        if path_bound:
            return BOUND_EXCEEDED, "path budget exceeded"
        return PASS, None
    if isinstance(o, RuntimeFault):
        return RUNTIME_ERROR, f"{o.kind} at {o.loc}"
    if isinstance(o, StepBoundExceeded):
        return BOUND_EXCEEDED, "step budget exceeded"
    raise TypeError(f"unknown outcome {o!r}")


def run_case(
    p: A.Program,
    fn: str,
    args: list[Value] | tuple[Value, ...],
    heap: Optional[Heap] = None,
    *,
    provenance: str = "",
    step_budget: int = DEFAULT_STEP_BUDGET,
    strict: bool = False,
    path_bound: bool = False,
) -> tuple[TestCase, ExecutionResult]:
    """Execute once and package the result as a :class:`TestCase`."""
    snapshot = heap.copy() if heap is not None else None
    res = eval_call(p, fn, list(args), heap, step_budget, strict=strict)
    verdict, msg = judge(p, fn, args, res, path_bound=path_bound)
    case = TestCase(fn, tuple(args), snapshot, res.outcome, verdict, msg, provenance,
                    res.trace.signature(), path_bound, p.function(fn).ret == "void")
    return case, res


def replay(p: A.Program, case: TestCase, *, step_budget: int = DEFAULT_STEP_BUDGET,
           strict: bool = False) -> tuple[str, ExecutionResult]:
    """Re-execute a case independently and return the re-derived verdict."""
    res = eval_call(p, case.function, list(case.args), case.heap, step_budget, strict=strict)
    verdict, _ = judge(p, case.function, case.args, res, path_bound=case.path_bound)
    return verdict, res


def replay_matches(p: A.Program, case: TestCase, **kw) -> bool:
    verdict, res = replay(p, case, **kw)
    return (verdict == case.verdict and res.outcome == case.outcome
            and res.trace.signature() == case.signature)


# -- serialization -------------------------------------------------------------

def _value_to_json(v: Value):
    return {"ref": v.oid} if isinstance(v, Handle) else v


def _value_from_json(v) -> Value:
    return Handle(v["ref"]) if isinstance(v, dict) else v


def _loc(loc: A.Loc) -> list:
    return [loc.func, loc.line, loc.col]


def _outcome_to_json(o: Outcome) -> dict:
    if isinstance(o, Returned):
        return {"kind": "returned", "value": _value_to_json(o.value)}
    if isinstance(o, CheckViolated):
        return {"kind": "check", "loc": _loc(o.loc), "message": o.message}
    if isinstance(o, RuntimeFault):
        return {"kind": "fault", "fault": o.kind, "loc": _loc(o.loc)}
    return {"kind": "step-bound"}


def _outcome_from_json(d: dict) -> Outcome:
    kind = d["kind"]
    if kind == "returned":
        return Returned(_value_from_json(d["value"]))
    if kind == "check":
        return CheckViolated(A.Loc(*d["loc"]), d["message"])
    if kind == "fault":
        return RuntimeFault(d["fault"], A.Loc(*d["loc"]))
    return StepBoundExceeded()


_MAX_PERIOD = 64


def _repeats(seq: list[int], i: int, p: int) -> int:
    block = seq[i:i + p]
    k, j = 1, i + p
    while seq[j:j + p] == block:
        k, j = k + 1, j + p
    return k


def encode_signature(sig: tuple) -> dict:
    """Compact JSON form of a path signature.

    Distinct events go into ``sites``; ``runs`` is a list of
    ``[repeat count, site indices]`` blocks, so loop paths stay small.
    """
    index: dict = {}
    seq = [index.setdefault(e, len(index)) for e in sig]
    runs: list[list] = []
    i = 0
    while i < len(seq):
        best_p, best_k = 0, 1
        for p in range(1, min(_MAX_PERIOD, (len(seq) - i) // 2) + 1):
            k = _repeats(seq, i, p)
            if k >= 2 and k * p > best_k * best_p:
                best_p, best_k = p, k
        if best_p:
            runs.append([best_k, seq[i:i + best_p]])
            i += best_k * best_p
        else:
            if runs and runs[-1][0] == 1:
                runs[-1][1].append(seq[i])
            else:
                runs.append([1, [seq[i]]])
            i += 1
    sites = [["B" if isinstance(e, BranchEvent) else "C", *_loc(e.loc), e[1]] for e in index]
    return {"sites": sites, "runs": runs}


def decode_signature(d: dict) -> tuple:
    sites = [(BranchEvent if k == "B" else CheckEvent)(A.Loc(f, line, col), val)
             for k, f, line, col, val in d["sites"]]
    return tuple(sites[i] for k, block in d["runs"] for _ in range(k) for i in block)


def case_to_dict(c: TestCase) -> dict:
    """Plain JSON-ready form of a test case; :func:`case_from_dict` inverts it."""
    heap = None
    if c.heap is not None:
        heap = {"next_id": c.heap.next_id, "objects": [
            {"id": oid, "record": o.record, "fields": {k: _value_to_json(v) for k, v in o.fields.items()}}
            for oid, o in sorted(c.heap.objects.items())]}
    return {
        "function": c.function,
        "args": [_value_to_json(a) for a in c.args],
        "heap": heap,
        "outcome": _outcome_to_json(c.outcome),
        "verdict": c.verdict,
        "message": c.message,
        "provenance": c.provenance,
        "signature": encode_signature(c.signature),
        "path_bound": c.path_bound,
        "void": c.void,
    }


def case_from_dict(d: dict) -> TestCase:
    heap = None
    if d["heap"] is not None:
        heap = Heap(next_id=d["heap"]["next_id"])
        for o in d["heap"]["objects"]:
            heap.objects[o["id"]] = HeapObject(
                o["record"], {k: _value_from_json(v) for k, v in o["fields"].items()})
    sig = decode_signature(d["signature"])
    return TestCase(d["function"], tuple(_value_from_json(a) for a in d["args"]), heap,
                    _outcome_from_json(d["outcome"]), d["verdict"], d["message"], d["provenance"],
                    sig, d["path_bound"], d["void"])
