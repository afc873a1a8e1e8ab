"""Bounded-exhaustive generation of heap structures accepted by a ``repOK`` predicate.

A finitization bounds every record type to a pool of objects and every
scalar field to an interval. A candidate is one choice per (object, field)
slot. The predicate runs on each candidate under a field-read monitor; the
next candidate advances the last field it read, so every variation of
fields it never looked at is skipped in one step. Symmetry breaking and a
canonical labeling keep the output free of isomorphic duplicates.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .subjectlang import ast as A
from .subjectlang.interp import DEFAULT_STEP_BUDGET, Returned, RuntimeFault, eval_call
from .subjectlang.values import Handle, Heap, Value


class FinitizationError(ValueError):
    """The finitization text is malformed or does not fit the program."""


@dataclass
class Finitization:
    """Pools per record type and domains per field.

    ``pools`` maps record name to object count. ``intervals`` maps
    ``(record, field)`` to an inclusive integer range. Reference fields range
    over ``[null, obj 0, obj 1, ...]`` of their target pool and bool fields
    over ``[false, true]``.
    """

    root: str
    pools: dict[str, int]
    intervals: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"root {self.root}"]
        lines += [f"pool {r} {n}" for r, n in self.pools.items()]
        lines += [f"{r}.{f} = {lo}..{hi}" for (r, f), (lo, hi) in self.intervals.items()]
        return "\n".join(lines) + "\n"


_LINE_ROOT = re.compile(r"root\s+(\w+)$")
_LINE_POOL = re.compile(r"pool\s+(\w+)\s+(-?\d+)$")
_LINE_RANGE = re.compile(r"(\w+)\.(\w+)\s*=\s*(-?\d+)\s*\.\.\s*(-?\d+)$")


def finitize(text: str, p: A.Program) -> Finitization:
    """Parse a finitization and validate it against the record declarations.

    One directive per line, ``#`` starts a comment::

        root LinkedList
        pool LinkedListElement 2
        LinkedList.size = 0..2
        LinkedListElement.Data = 0..0

    The root type gets a pool of one unless stated. Every int field of every
    pooled record needs an interval.
    """
    root: Optional[str] = None
    pools: dict[str, int] = {}
    intervals: dict[tuple[str, str], tuple[int, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _LINE_ROOT.match(line):
            root = m[1]
        elif m := _LINE_POOL.match(line):
            pools[m[1]] = int(m[2])
        elif m := _LINE_RANGE.match(line):
            intervals[(m[1], m[2])] = (int(m[3]), int(m[4]))
        else:
            raise FinitizationError(f"line {lineno}: cannot parse {raw.strip()!r}")
    if root is None:
        raise FinitizationError("no root type given")
    pools.setdefault(root, 1)
    fin = Finitization(root, pools, intervals)
    _validate(fin, p)
    return fin


def _validate(fin: Finitization, p: A.Program) -> None:
    for rec, n in fin.pools.items():
        if rec not in p.records:
            raise FinitizationError(f"unknown record type {rec!r}")
        if n < 0:
            raise FinitizationError(f"pool size of {rec} must be non-negative")
    if fin.pools[fin.root] < 1:
        raise FinitizationError(f"root type {fin.root} needs at least one object")
    for (rec, name), (lo, hi) in fin.intervals.items():
        decl = p.records.get(rec)
        if decl is None:
            raise FinitizationError(f"unknown record type {rec!r}")
        if decl.field_type(name) is None:
            raise FinitizationError(f"{rec} has no field {name!r}")
        if decl.field_type(name) != "int":
            raise FinitizationError(f"{rec}.{name} is not an int field")
        if lo > hi:
            raise FinitizationError(f"empty interval {lo}..{hi} for {rec}.{name}")
    for rec in list(fin.pools):
        for f in p.records[rec].fields:
            if f.type == "int" and (rec, f.name) not in fin.intervals:
                raise FinitizationError(f"field {rec}.{f.name} has no interval")
            if f.type in p.records and f.type not in fin.pools:
                fin.pools[f.type] = 0  # only null is available


# -- candidate space ------------------------------------------------------------

@dataclass(frozen=True)
class Slot:
    oid: int
    record: str
    field: str
    domain: tuple[Value, ...]
    target: Optional[str]  # referenced record type, for reference fields


class CandidateSpace:
    """Materialized domains for one program and finitization.

    Objects are numbered by record declaration order, then pool index, and
    slots follow the same order with fields in declaration order. The root
    is the first object of the root type.
    """

    def __init__(self, p: A.Program, fin: Finitization):
        self.program = p
        self.fin = fin
        self.objects: list[tuple[str, int]] = []
        first: dict[str, int] = {}
        for rec in p.records:
            n = fin.pools.get(rec, 0)
            first[rec] = len(self.objects)
            self.objects.extend((rec, i) for i in range(n))
        self.first = first
        self.root = first[fin.root]
        self.slots: list[Slot] = []
        self.slot_of: dict[tuple[int, str], int] = {}
        for oid, (rec, _) in enumerate(self.objects):
            for f in p.records[rec].fields:
                if f.type == "int":
                    lo, hi = fin.intervals[(rec, f.name)]
                    dom: tuple[Value, ...] = tuple(range(lo, hi + 1))
                    target = None
                elif f.type == "bool":
                    dom, target = (False, True), None
                else:
                    n = fin.pools.get(f.type, 0)
                    dom = (None, *(Handle(first[f.type] + i) for i in range(n)))
                    target = f.type
                self.slot_of[(oid, f.name)] = len(self.slots)
                self.slots.append(Slot(oid, rec, f.name, dom, target))
        self.sizes = [len(s.domain) for s in self.slots]

    def total(self) -> int:
        n = 1
        for s in self.sizes:
            n *= s
        return n

    def start(self) -> CandidateVector:
        return CandidateVector(self, (0,) * len(self.slots))

    def decode(self, cv: CandidateVector) -> Structure:
        heap = Heap()
        for rec, _ in self.objects:
            heap.alloc(rec, {})
        for s, i in zip(self.slots, cv.indices):
            heap.objects[s.oid].fields[s.field] = s.domain[i]
        return Structure(heap, Handle(self.root), cv.indices)

    def log_slots(self, reads) -> list[int]:
        """Map ``(object id, field)`` reads to slot numbers, first read first."""
        seen: dict[int, None] = {}
        for key in reads:
            s = self.slot_of.get(key)
            if s is not None:
                seen.setdefault(s, None)
        return list(seen)


@dataclass(frozen=True)
class CandidateVector:
    space: CandidateSpace = field(repr=False, compare=False)
    indices: tuple[int, ...]


@dataclass
class Structure:
    heap: Heap
    root: Handle
    indices: tuple[int, ...] = ()


AccessLog = list  # of (object id, field name), first-read order


def _symmetry_limit(space: CandidateSpace, idx: list[int], order: list[int], pos: int) -> int:
    """Largest domain index slot ``order[pos]`` may take without producing an isomorph.

    A reference may point at any object already referenced earlier in the
    access order, or at the first not-yet-referenced one of its pool.
    """
    slot = space.slots[order[pos]]
    last = len(slot.domain) - 1
    if slot.target is None:
        return last
    t = slot.target
    highest = 0 if t == space.fin.root else -1  # pool index
    base = space.first[t]
    for s in order[:pos]:
        other = space.slots[s]
        v = other.domain[idx[s]]
        if other.target == t and v is not None:
            highest = max(highest, v.oid - base)
        if other.record == t:
            highest = max(highest, other.oid - base)
    return min(last, highest + 2)  # domain index = pool index + 1


def prune_next(cv: CandidateVector, log: AccessLog, verdict: bool = False, *,
               symmetry: bool = True) -> Optional[CandidateVector]:
    """Successor of ``cv`` after the predicate read the fields in ``log``.

    The last-read field is advanced and every field read after it is reset,
    so candidates differing only in unread fields are never visited; that
    holds for either verdict since the predicate could not have told them
    apart. Returns None when the space is exhausted.
    """
    space = cv.space
    order = space.log_slots(log)
    idx = list(cv.indices)
    while order:
        s = order[-1]
        limit = _symmetry_limit(space, idx, order, len(order) - 1) if symmetry else space.sizes[s] - 1
        if idx[s] < limit:
            idx[s] += 1
            return CandidateVector(space, tuple(idx))
        idx[s] = 0
        order.pop()
    return None


def _lex_next(cv: CandidateVector) -> Optional[CandidateVector]:
    idx = list(cv.indices)
    for s in range(len(idx) - 1, -1, -1):
        if idx[s] + 1 < cv.space.sizes[s]:
            idx[s] += 1
            return CandidateVector(cv.space, tuple(idx))
        idx[s] = 0
    return None


# -- canonical labeling and rendering ----------------------------------------------

def _visit_order(s: Structure) -> list[int]:
    """Object ids reachable from the root, numbered by first visit (fields in order)."""
    order = [s.root.oid]
    seen = {s.root.oid}
    i = 0
    while i < len(order):
        for v in s.heap.objects[order[i]].fields.values():
            if isinstance(v, Handle) and v.oid not in seen:
                seen.add(v.oid)
                order.append(v.oid)
        i += 1
    return order


def canonical_form(s: Structure) -> tuple:
    """Label sequence invariant under renaming objects within their pools.

    Reachable objects are renumbered breadth-first from the root along field
    declaration order; each contributes its record name and field values
    with references replaced by the new numbers.
    """
    order = _visit_order(s)
    label = {oid: i for i, oid in enumerate(order)}
    out = []
    for oid in order:
        obj = s.heap.objects[oid]
        vals = tuple(label[v.oid] if isinstance(v, Handle) else v for v in obj.fields.values())
        out.append((obj.record, vals))
    return tuple(out)


def _dot_id(oid: int) -> str:
    return f"o{oid}"


def to_dot(s: Structure, name: str = "structure") -> str:
    """Render the reachable part as a DOT digraph with a node per object."""
    lines = [f"digraph {name} {{", "  node [shape=box];"]
    order = _visit_order(s)
    for oid in order:
        obj = s.heap.objects[oid]
        # null references are simply absent edges
        scalars = [f"{k}={str(v).lower() if isinstance(v, bool) else v}"
                   for k, v in obj.fields.items() if isinstance(v, (bool, int))
                   and not isinstance(v, Handle)]
        label = "\\n".join([f"{obj.record}#{oid}", *scalars])
        lines.append(f'  {_dot_id(oid)} [label="{label}"];')
    for oid in order:
        for k, v in s.heap.objects[oid].fields.items():
            if isinstance(v, Handle):
                lines.append(f'  {_dot_id(oid)} -> {_dot_id(v.oid)} [label="{k}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- generation --------------------------------------------------------------------

@dataclass
class GenStats:
    explored: int = 0  # predicate executions
    valid: int = 0  # candidates the predicate accepted
    classes: int = 0  # structures emitted (one per isomorphism class)
    faults: int = 0  # candidates on which the predicate faulted
    bound: int = 0  # candidates on which the predicate ran out of steps
    total: int = 0  # size of the full candidate space

    @property
    def skipped(self) -> int:
        return self.total - self.explored

    def line(self) -> str:
        return (f"candidates={self.explored} valid={self.valid} classes={self.classes} "
                f"skipped={self.skipped} faults={self.faults} bound={self.bound}")


def generate(
    p: A.Program,
    pred: str,
    fin: Finitization,
    *,
    prune: bool = True,
    stats: Optional[GenStats] = None,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> Iterator[Structure]:
    """Yield one structure per isomorphism class accepted by ``pred``.

    With ``prune`` off every candidate vector is executed in plain
    lexicographic order; the emitted classes are the same either way.
    """
    fdef = p.function(pred)
    if len(fdef.params) != 1 or fdef.params[0].type != fin.root or fdef.ret != "bool":
        raise FinitizationError(f"{pred} must take one {fin.root} and return bool")
    space = CandidateSpace(p, fin)
    stats = stats if stats is not None else GenStats()
    stats.total = space.total()
    seen: set[tuple] = set()
    cv: Optional[CandidateVector] = space.start()
    while cv is not None:
        s = space.decode(cv)
        reads: list = []
        res = eval_call(p, pred, [s.root], s.heap, step_budget, copy_heap=False, reads=reads)
        stats.explored += 1
        ok = isinstance(res.outcome, Returned) and res.outcome.value is True
        if isinstance(res.outcome, RuntimeFault):
            stats.faults += 1
        elif not isinstance(res.outcome, Returned):
            stats.bound += 1
        if ok:
            stats.valid += 1
            fresh = space.decode(cv)  # the predicate may have written to its copy
            key = canonical_form(fresh)
            if key not in seen:
                seen.add(key)
                stats.classes += 1
                yield fresh
        cv = prune_next(cv, reads, ok) if prune else _lex_next(cv)
