"""Statement, branch, path and check-obligation coverage over recorded traces."""
from __future__ import annotations

from dataclasses import dataclass, field

from . import ast as A
from .interp import BranchEvent, CheckEvent, Trace


class MalformedTrace(ValueError):
    pass


@dataclass
class CoverageReport:
    function: str
    statements: frozenset[A.Loc]
    branch_sides: frozenset[tuple[A.Loc, bool]]
    check_locs: frozenset[A.Loc]
    covered_statements: set[A.Loc] = field(default_factory=set)
    covered_branch_sides: set[tuple[A.Loc, bool]] = field(default_factory=set)
    check_outcomes: dict[A.Loc, set[bool]] = field(default_factory=dict)
    paths: set[tuple] = field(default_factory=set)

    @property
    def statement_ratio(self) -> tuple[int, int]:
        return len(self.covered_statements), len(self.statements)

    @property
    def branch_ratio(self) -> tuple[int, int]:
        return len(self.covered_branch_sides), len(self.branch_sides)

    @property
    def check_ratio(self) -> tuple[int, int]:
        """Check obligations met: one for a passing and one for a failing evaluation of each check."""
        met = sum(len(v) for v in self.check_outcomes.values())
        return met, 2 * len(self.check_locs)

    @property
    def distinct_paths(self) -> int:
        return len(self.paths)

    def to_dict(self) -> dict:
        return {
            "function": self.function,
            "statements": {"covered": len(self.covered_statements), "total": len(self.statements)},
            "branches": {"covered": len(self.covered_branch_sides), "total": len(self.branch_sides)},
            "checks": {
                str(loc): {"true": True in self.check_outcomes.get(loc, ()),
                           "false": False in self.check_outcomes.get(loc, ())}
                for loc in sorted(self.check_locs)
            },
            "distinct_paths": len(self.paths),
            "uncovered_statements": [str(x) for x in sorted(self.statements - self.covered_statements)],
            "uncovered_branches": [
                f"{loc}:{'T' if side else 'F'}" for loc, side in sorted(self.branch_sides - self.covered_branch_sides)
            ],
        }


def _static_sites(p: A.Program, fn: str):
    stmts, sides, checks = set(), set(), set()
    for name in A.reachable_functions(p, fn):
        f = p.functions[name]
        for s in A.walk_stmts(f.body):
            stmts.add(A.loc_of(name, s))
            if isinstance(s, A.Check):
                checks.add(A.loc_of(name, s))
        for loc in A.branch_points(f):
            sides.add((loc, True))
            sides.add((loc, False))
    return frozenset(stmts), frozenset(sides), frozenset(checks)


def coverage_of(p: A.Program, fn: str, traces: list[Trace]) -> CoverageReport:
    """Tally coverage of ``fn`` (and every function it can reach) over ``traces``."""
    p.function(fn)
    stmts, sides, checks = _static_sites(p, fn)
    rep = CoverageReport(fn, stmts, sides, checks)
    for t in traces:
        for loc in t.statements:
            if loc not in stmts:
                raise MalformedTrace(f"statement location {loc} is not part of {fn}")
        rep.covered_statements.update(t.statements)
        for ev in t.events:
            if isinstance(ev, BranchEvent):
                if (ev.loc, ev.taken) not in sides:
                    raise MalformedTrace(f"branch location {ev.loc} is not part of {fn}")
                rep.covered_branch_sides.add((ev.loc, ev.taken))
            elif isinstance(ev, CheckEvent):
                if ev.loc not in checks:
                    raise MalformedTrace(f"check location {ev.loc} is not part of {fn}")
                rep.check_outcomes.setdefault(ev.loc, set()).add(ev.value)
            else:
                raise MalformedTrace(f"unknown trace event {ev!r}")
        rep.paths.add(t.signature())
    return rep
