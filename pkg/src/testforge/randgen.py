"""Random inputs checked against contracts, and inputs derived from a grammar.

Scalars are drawn uniformly from declared intervals after a handful of
boundary values. Record parameters become one fresh object each, with scalar
fields drawn like parameters (``p.x``) and reference fields left null.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Union

from .subjectlang import ast as A
from .subjectlang.interp import DEFAULT_STEP_BUDGET, Outcome, Returned, eval_call, eval_contract
from .subjectlang.values import INT_MAX, INT_MIN, Heap, Value, default_value, render_value, tdiv
from .testcase import judge

PROBE = 10_000
MAX_REJECTION = 0.99

Interval = tuple[int, int]
Domains = dict[str, Union[Interval, str]]  # "bool" for bool slots


class DomainTooStrict(ValueError):
    """Almost every draw from the domains violates the precondition."""


class DomainError(ValueError):
    """Domains are missing a slot or hold an empty interval."""


@dataclass(frozen=True)
class _Slot:
    path: str  # "x" or "p.x"
    kind: str  # "int" | "bool"
    param: int
    field: Optional[str] = None


def slots(p: A.Program, fn: str) -> list[_Slot]:
    """Scalar input slots of ``fn`` in parameter then field declaration order."""
    out = []
    for i, prm in enumerate(p.function(fn).params):
        if prm.type in ("int", "bool"):
            out.append(_Slot(prm.name, prm.type, i))
        elif prm.type in p.records:
            for f in p.records[prm.type].fields:
                if f.type in ("int", "bool"):
                    out.append(_Slot(f"{prm.name}.{f.name}", f.type, i, f.name))
    return out


@dataclass
class Sample:
    args: tuple[Value, ...]
    heap: Optional[Heap]
    values: tuple[int | bool, ...]  # one per slot
    boundary: bool = False

    def render(self) -> str:
        return ", ".join(render_value(a, self.heap) for a in self.args)


class Batch(list):
    """List of samples that also reports how many draws ``requires`` rejected."""

    rejected: int = 0


def _check_domains(sl: list[_Slot], domains: Domains) -> None:
    for s in sl:
        d = domains.get(s.path, "bool" if s.kind == "bool" else None)
        if d is None:
            raise DomainError(f"no domain for {s.path}")
        if s.kind == "int":
            if d == "bool" or d[0] > d[1]:
                raise DomainError(f"bad interval for {s.path}: {d!r}")
            if d[0] < INT_MIN or d[1] > INT_MAX:
                raise DomainError(f"interval for {s.path} leaves int32")


def _build(p: A.Program, fn: str, sl: list[_Slot], values, boundary=False) -> Sample:
    fdef = p.function(fn)
    heap = Heap()
    args: list[Value] = []
    for prm in fdef.params:
        if prm.type in p.records:
            rec = p.records[prm.type]
            args.append(heap.alloc(rec.name, {f.name: default_value(f.type) for f in rec.fields}))
        else:
            args.append(default_value(prm.type))
    for s, v in zip(sl, values):
        if s.field is None:
            args[s.param] = v
        else:
            heap.write(args[s.param], s.field, v)
    return Sample(tuple(args), heap if heap.objects else None, tuple(values), boundary)


def _boundary(lo: int, hi: int, i: int) -> int:
    return max(lo, min(hi, (lo, -1, 0, 1, hi)[i]))


def gen_random(p: A.Program, fn: str, domains: Domains, seed: int, count: int, *,
               boundary: bool = True) -> Batch:
    """``count`` inputs for ``fn``, all satisfying its precondition.

    The first five (before rejection) are the boundary values min, -1, 0, 1
    and max of each interval, clamped into it; the rest are uniform. Raises
    :class:`DomainTooStrict` when more than 99% of the first 10^4 draws fail
    ``requires``.
    """
    sl = slots(p, fn)
    _check_domains(sl, domains)
    rng = random.Random(seed)
    out = Batch()
    has_requires = p.function(fn).requires is not None
    drawn = 0
    accepted = 0
    while len(out) < count:
        edge = boundary and drawn < 5
        vals = []
        for s in sl:
            d = domains.get(s.path, "bool")
            if s.kind == "bool":
                vals.append(bool(drawn % 2) if edge else rng.random() < 0.5)
            else:
                vals.append(_boundary(d[0], d[1], drawn) if edge else rng.randint(d[0], d[1]))
        drawn += 1
        smp = _build(p, fn, sl, vals, edge)
        if has_requires and eval_contract(p, fn, "requires", list(smp.args), smp.heap or Heap()) is False:
            out.rejected += 1
        else:
            accepted += 1
            out.append(smp)
        if drawn == PROBE and accepted < (1 - MAX_REJECTION) * PROBE:
            raise DomainTooStrict(
                f"{fn}: {PROBE - accepted} of {PROBE} draws violate requires")
    return out


# -- property checking ---------------------------------------------------------------

@dataclass
class Failure:
    args: tuple[Value, ...]
    heap: Optional[Heap]
    values: tuple
    outcome: Outcome
    verdict: str
    message: Optional[str] = None
    trial: int = -1

    def render(self) -> str:
        return ", ".join(render_value(a, self.heap) for a in self.args)


@dataclass
class PropertyReport:
    function: str
    seed: int
    trials: int = 0
    rejected: int = 0
    failures: list[Failure] = field(default_factory=list)
    counterexample: Optional[Failure] = None  # first failure after shrinking
    shrink_steps: int = 0


def _run(p, fn, smp: Sample, step_budget: int) -> Optional[Failure]:
    res = eval_call(p, fn, list(smp.args), smp.heap, step_budget)
    verdict, msg = judge(p, fn, smp.args, res)
    failed = verdict != "Pass" or not isinstance(res.outcome, Returned)
    if not failed:
        return None
    return Failure(smp.args, smp.heap, smp.values, res.outcome, verdict, msg)


def halfway(v: int, target: int) -> int:
    """One bisection step from ``v`` toward ``target`` (moves at least one)."""
    return target + tdiv(v - target, 2)


def check_property(
    p: A.Program,
    fn: str,
    domains: Domains,
    seed: int,
    trials: int,
    *,
    stop_after: Optional[int] = None,
    shrink: bool = True,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> PropertyReport:
    """Run ``trials`` random inputs against ``fn``'s ensures clause.

    A trial fails on a false ensures, a failed check, a runtime fault or an
    exhausted step budget. The first failure is shrunk: each int slot in
    turn moves halfway toward 0 (clamped into its interval) for as long as
    the input keeps failing, until no single step applies. ``stop_after``
    ends the run after that many failures.
    """
    if p.function(fn).ensures is None:
        raise ValueError(f"{fn} has no ensures clause to check")
    sl = slots(p, fn)
    batch = gen_random(p, fn, domains, seed, trials)
    report = PropertyReport(fn, seed, rejected=batch.rejected)
    for i, smp in enumerate(batch):
        report.trials += 1
        f = _run(p, fn, smp, step_budget)
        if f is not None:
            f.trial = i
            report.failures.append(f)
            if stop_after is not None and len(report.failures) >= stop_after:
                break
    if report.failures:
        first = report.failures[0]
        report.counterexample, report.shrink_steps = (
            _shrink(p, fn, sl, domains, first, step_budget) if shrink else (first, 0))
    return report


def _shrink(p, fn, sl, domains, failure: Failure, step_budget: int) -> tuple[Failure, int]:
    requires = p.function(fn).requires is not None
    vals = list(failure.values)
    best = failure
    steps = 0
    progress = True
    while progress:
        progress = False
        for i, s in enumerate(sl):
            if s.kind != "int":
                continue
            lo, hi = domains[s.path]
            target = max(lo, min(hi, 0))
            while vals[i] != target:
                trial = list(vals)
                trial[i] = halfway(vals[i], target)
                smp = _build(p, fn, sl, trial)
                if requires and eval_contract(p, fn, "requires", list(smp.args), smp.heap or Heap()) is False:
                    break
                f = _run(p, fn, smp, step_budget)
                if f is None:
                    break
                vals, best = trial, f
                steps += 1
                progress = True
    best.trial = failure.trial
    return best, steps


# -- grammars ------------------------------------------------------------------------

class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class Grammar:
    """Productions as tuples of symbols; terminals are ``("t", text)``, nonterminals ``("n", name)``."""

    start: str
    productions: dict[str, tuple[tuple[tuple[str, str], ...], ...]]

    @property
    def nonterminals(self) -> list[str]:
        return list(self.productions)

    @property
    def terminals(self) -> list[str]:
        seen: dict[str, None] = {}
        for prods in self.productions.values():
            for rhs in prods:
                for kind, text in rhs:
                    if kind == "t":
                        seen.setdefault(text, None)
        return list(seen)


_TOKEN = re.compile(r'\s*(?:"((?:[^"\\]|\\.)*)"|(\w+)|(\|))')


def parse_grammar(text: str) -> Grammar:
    """Parse ``Name ::= symbols`` lines; quoted symbols are terminals, ``|`` separates alternatives.

    The first left-hand side is the start symbol; ``#`` begins a comment line.
    """
    prods: dict[str, list] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "::=" not in line:
            raise GrammarError(f"line {lineno}: expected '::='")
        lhs, rhs = line.split("::=", 1)
        lhs = lhs.strip()
        if not re.fullmatch(r"\w+", lhs):
            raise GrammarError(f"line {lineno}: bad nonterminal {lhs!r}")
        alts: list[list] = [[]]
        pos = 0
        rhs = rhs.rstrip()
        while pos < len(rhs):
            m = _TOKEN.match(rhs, pos)
            if not m or m.end() == pos:
                raise GrammarError(f"line {lineno}: cannot read {rhs[pos:].strip()!r}")
            if m[1] is not None:
                alts[-1].append(("t", bytes(m[1], "utf-8").decode("unicode_escape")))
            elif m[2] is not None:
                alts[-1].append(("n", m[2]))
            else:
                alts.append([])
            pos = m.end()
            while pos < len(rhs) and rhs[pos].isspace():
                pos += 1
        prods.setdefault(lhs, []).extend(tuple(a) for a in alts)
    if not prods:
        raise GrammarError("grammar has no productions")
    for name, alts in prods.items():
        for rhs in alts:
            for kind, sym in rhs:
                if kind == "n" and sym not in prods:
                    raise GrammarError(f"nonterminal {sym!r} used in {name} has no productions")
    return Grammar(next(iter(prods)), {k: tuple(v) for k, v in prods.items()})


class Strings(list):
    """Derived strings; ``truncated`` is set when enumeration hit its cap."""

    truncated: bool = False


DEFAULT_CAP = 100_000


def enumerate_strings(g: Grammar, max_depth: int, cap: int = DEFAULT_CAP) -> Strings:
    """Every string with a derivation tree of depth at most ``max_depth``.

    A production without nonterminals has depth 1. Trees are ordered by
    their production indices in preorder; repeated strings keep the first.
    """
    memo: dict[tuple[str, int], list[str]] = {}
    over = [False]

    def derive(nt: str, d: int) -> list[str]:
        key = (nt, d)
        if key in memo:
            return memo[key]
        out: list[str] = []
        if d >= 1:
            for rhs in g.productions[nt]:
                parts = [[text] if kind == "t" else derive(text, d - 1) for kind, text in rhs]
                for combo in product(*parts):
                    out.append("".join(combo))
                    if len(out) > cap:
                        over[0] = True
                        break
                if over[0]:
                    break
        memo[key] = out
        return out

    res = Strings(dict.fromkeys(derive(g.start, max_depth)))
    if over[0] or len(res) > cap:
        del res[cap:]
        res.truncated = True
    return res


def _min_heights(g: Grammar) -> dict[str, float]:
    h = {nt: float("inf") for nt in g.productions}
    changed = True
    while changed:
        changed = False
        for nt, alts in g.productions.items():
            for rhs in alts:
                v = 1 + max((h[t] for k, t in rhs if k == "n"), default=0)
                if v < h[nt]:
                    h[nt] = v
                    changed = True
    return h


def sample_strings(g: Grammar, seed: int, count: int, max_depth: int = 8) -> Strings:
    """``count`` random derivations, choosing productions uniformly.

    Near the depth cutoff only productions that can still finish in time
    are eligible (the shallowest one when none can).
    """
    rng = random.Random(seed)
    h = _min_heights(g)

    def rhs_height(rhs) -> float:
        return 1 + max((h[t] for k, t in rhs if k == "n"), default=0)

    def derive(nt: str, budget: int, out: list[str]) -> None:
        alts = g.productions[nt]
        fits = [r for r in alts if rhs_height(r) <= budget]
        if not fits:
            fits = [min(alts, key=rhs_height)]
        rhs = fits[rng.randrange(len(fits))]
        for kind, text in rhs:
            if kind == "t":
                out.append(text)
            else:
                derive(text, budget - 1, out)

    res = Strings()
    for _ in range(count):
        buf: list[str] = []
        derive(g.start, max_depth, buf)
        res.append("".join(buf))
    return res


def gen_from_grammar(g: Grammar, mode: str, *, max_depth: int = 8, seed: int = 0,
                     count: int = 100, cap: int = DEFAULT_CAP) -> Strings:
    """Dispatch to ``enumerate`` (all strings up to ``max_depth``) or ``sample``."""
    if mode == "enumerate":
        return enumerate_strings(g, max_depth, cap)
    if mode == "sample":
        return sample_strings(g, seed, count, max_depth)
    raise ValueError(f"mode must be 'enumerate' or 'sample', not {mode!r}")
