"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL <summary>`` line to the
terminal, even under output capture. Running this file directly invokes
pytest on it.
"""
from __future__ import annotations

import random
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from oracles import (
    brute_force_classes,
    brute_sat,
    constructed_lists,
    count_derivations,
    list_invariants,
    list_sequences,
    minimal_failing_pairs,
    random_system,
    wide_wrap,
)
from testforge import corpus, randgen
from testforge import solver as S
from testforge.concolic import Limits, explore
from testforge.harness import DEFAULT_SEED, main
from testforge.heapgen import GenStats, canonical_form, finitize, generate
from testforge.seqgen import INVARIANT_VIOLATION, ApiSpec, Operation, explore_sequences
from testforge.subjectlang import Heap, Returned, StepBoundExceeded, coverage_of, eval_call, with_contract
from testforge.testcase import CHECK_VIOLATION, PASS, replay_matches

_terminal = None


@pytest.fixture(autouse=True)
def _report_terminal(capsys):
    global _terminal
    _terminal = capsys
    yield
    _terminal = None


@contextmanager
def criterion(n: int, title: str):
    """Print one pass/fail line for criterion ``n``; failures still raise."""
    detail: list[str] = []
    try:
        yield detail
    except BaseException as e:
        _emit(f"ACCEPTANCE {n:>2} FAIL {title}: {type(e).__name__} {e}".rstrip())
        raise
    _emit(f"ACCEPTANCE {n:>2} PASS {title}" + (f" ({'; '.join(detail)})" if detail else ""))


def _emit(line: str) -> None:
    if _terminal is not None:
        with _terminal.disabled():
            print("\n" + line)
    else:
        print(line)


def _fin_ll(n: int, p):
    return finitize(corpus.fin_ll(n, 0, n), p)


def test_1_multiply_hidden_branch():
    with criterion(1, "Multiply hidden branch") as d:
        p = corpus.program("multiply")
        t = time.perf_counter()
        cases, state = explore(p, "Multiply", Limits(max_queries=1000))
        elapsed = time.perf_counter() - t
        hits = []
        for c in cases:
            obj = c.heap.get(c.args[0]) if c.args[0] is not None else None
            if obj is not None and wide_wrap(obj.fields["x"] * obj.fields["y"]) == 42:
                hits.append((obj.fields["x"], obj.fields["y"]))
                assert eval_call(p, "Multiply", list(c.args), c.heap).outcome == Returned(1)
        cov = coverage_of(p, "Multiply", [eval_call(p, "Multiply", list(c.args), c.heap).trace for c in cases])
        assert hits and cov.branch_ratio == (2, 2)
        assert all(replay_matches(p, c) for c in cases)
        assert state.queries <= 1000 and elapsed < 10
        d += [f"input {hits[0]}", f"{state.queries} queries", f"{elapsed:.2f}s"]


def _first_overflow(x: int, n: int, limit: int = 1000):
    """Plain-Python binary search with int32 wraparound; (lo, hi, mid) at the first bad midpoint."""
    lo, hi = 0, n
    for _ in range(limit):
        if not lo < hi:
            return None
        s = wide_wrap(lo + hi)
        mid = int(s / 2)  # truncation toward zero
        if mid < lo:
            return lo, hi, mid
        if x < mid:
            hi = mid
        else:
            lo = wide_wrap(mid + 1)
    return None


def test_2_bsearch_overflow():
    with criterion(2, "binary-search overflow") as d:
        p = corpus.program("bsearch")
        t = time.perf_counter()
        cases, state = explore(p, "BSearch", Limits(max_queries=30))
        elapsed = time.perf_counter() - t
        bad = [c for c in cases if c.verdict == CHECK_VIOLATION]
        assert bad, "no CheckViolation case"
        x, n = bad[0].args
        assert replay_matches(p, bad[0])
        assert eval_call(p, "BSearch", [x, n], None, 10_000).trace.failed_checks()
        lo, hi, mid = _first_overflow(x, n)
        assert mid < lo and lo + hi >= 2**31
        assert elapsed < 30
        d += [f"BSearch({x}, {n})", f"lo={lo} hi={hi} mid={mid}", f"{elapsed:.2f}s"]


def test_3_leap_year_table():
    with criterion(3, "leap-year table") as d:
        p = corpus.program("leapyear")
        t = time.perf_counter()
        pairs = {0: 1980, 367: 1981, 1023: 1982, 2561: 1987, 7874: 2001}
        for day, year in pairs.items():
            assert eval_call(p, "FromDayToYear", [day]).outcome == Returned(year), day
        for day in (366, 7671):
            r = eval_call(p, "FromDayToYear", [day], None, 10**6)
            assert isinstance(r.outcome, StepBoundExceeded) and r.steps == 10**6, day
        elapsed = time.perf_counter() - t
        assert elapsed < 1
        d.append(f"{elapsed:.2f}s")


def test_4_bsearch_return_values():
    with criterion(4, "BSearch return values"):
        p = corpus.program("bsearch")
        rows = [((1, 1610612736), 2), ((2, 805306368), 3), ((11, 1610612736), 12), ((157819, 0), 0)]
        for args, want in rows:
            assert eval_call(p, "BSearch", list(args)).outcome == Returned(want), args


def test_5_korat_linked_lists():
    with criterion(5, "linked-list generation") as d:
        p = corpus.program("linkedlist")
        for n in (2, 3, 4, 5):
            t = time.perf_counter()
            got = list(generate(p, "repOK", _fin_ll(n, p)))
            elapsed = time.perf_counter() - t
            expected = brute_force_classes(n)[1] if n <= 4 else constructed_lists(n)
            assert len(got) == expected == n + 1, n
            assert len({canonical_form(s) for s in got}) == len(got)
            for s in got:
                assert list_invariants(s.heap, s.root) == []
            if n == 5:
                assert elapsed < 5
                d.append(f"N=5 in {elapsed:.2f}s")


def test_6_pruning_soundness():
    with criterion(6, "pruning soundness") as d:
        p = corpus.program("linkedlist")
        ps, us = GenStats(), GenStats()
        pruned = {canonical_form(s) for s in generate(p, "repOK", _fin_ll(3, p), stats=ps)}
        unpruned = {canonical_form(s) for s in generate(p, "repOK", _fin_ll(3, p), prune=False, stats=us)}
        assert pruned == unpruned
        assert ps.explored < us.explored
        d += [f"pruned explored {ps.explored}", f"unpruned explored {us.explored}"]


def test_7_solver_oracle_equivalence():
    with criterion(7, "solver vs enumeration") as d:
        r = random.Random(DEFAULT_SEED)
        counts = {S.SAT: 0, S.UNSAT: 0}
        for k in range(1000):
            cs, doms = random_system(r)
            res = S.solve(cs, doms)
            assert res.status != S.UNKNOWN, f"system {k} unknown"
            assert (res.status == S.SAT) == brute_sat(cs, doms), f"system {k}:\n{S.dump(cs)}"
            if res.status == S.SAT:
                assert all(S.holds(c, res.model) for c in cs)
            counts[res.status] += 1
        d += [f"{counts[S.SAT]} sat", f"{counts[S.UNSAT]} unsat", "0 disagreements"]


def test_8_contract_oracle():
    with criterion(8, "Multiply contract counterexample") as d:
        p = with_contract(corpus.program("multiply"), "Multiply", "ensures", "result == 0")
        rep = randgen.check_property(p, "Multiply", {"p.x": (1, 50), "p.y": (1, 50)}, DEFAULT_SEED,
                                     100_000, stop_after=1)
        cx = rep.counterexample
        assert cx is not None and cx.values[0] * cx.values[1] == 42
        assert cx.values in minimal_failing_pairs(lambda a, b: a * b == 42, 1, 50, 1)
        d += [f"shrunk to {cx.values}", f"{rep.trials} trials"]


def test_9_grammar_enumeration():
    with criterion(9, "parentheses grammar counts") as d:
        g = randgen.parse_grammar(corpus.source("parens.bnf"))
        sizes = []
        for depth in range(0, 9):
            got = randgen.enumerate_strings(g, depth)
            assert len(got) == count_derivations(g.productions, g.start, depth), depth
            sizes.append(len(got))
        d.append(f"sizes {sizes}")


def test_10_sequence_exploration():
    with criterion(10, "linked-list sequences") as d:
        p = corpus.program("linkedlist")
        api = ApiSpec("LinkedList", "repOK", (Operation("add", ((0, 9),)), Operation("removeFirst")))
        _, seqs = explore_sequences(p, api, 3)
        got = {tuple(f"{op}({', '.join(map(str, a))})" for op, a in s.calls) for s in seqs}
        assert got == list_sequences(3) and all(s.verdict == PASS for s in seqs)
        buggy = ApiSpec("LinkedList", "repOK", (Operation("addNoPrev", ((0, 9),)), Operation("removeFirst")))
        _, bseqs = explore_sequences(p, buggy, 3)
        bad = min((s for s in bseqs if s.verdict == INVARIANT_VIOLATION), key=lambda s: len(s.calls))
        assert len(bad.calls) == 2
        heap = Heap()
        root = heap.alloc("LinkedList", {"Head": None, "Tail": None, "size": 0})
        for op, args in bad.calls:
            heap = eval_call(p, op, [root, *args], heap).heap
        assert "eq5" in list_invariants(heap, root)
        d += [f"{len(got)} sequences", f"bug at {bad.render()}"]


_CORPUS_INI = """
[random]
trials = 2000
ensures = result == 0
domain.p.x = 1..50
domain.p.y = 1..50

[korat]
finitization =
    root LinkedList
    pool LinkedListElement 3
    LinkedList.size = 0..3
    LinkedListElement.Data = 0..0

[sequences]
state = LinkedList
invariant = repOK
ops = addNoPrev(0..9) removeFirst
max_len = 3
arg_budget = 2
"""


def _corpus_runs(out: Path, ini: Path) -> None:
    c = corpus.path
    runs = [
        ["explore", "--src", c("multiply.mini"), "--fn", "Multiply"],
        ["explore", "--src", c("multiply_pex.mini"), "--fn", "Multiply"],
        ["explore", "--src", c("bsearch.mini"), "--fn", "BSearch", "--budget", "12"],
        ["explore", "--src", c("leapyear.mini"), "--fn", "FromDayToYear", "--budget", "30"],
        ["random", "--src", c("multiply.mini"), "--fn", "Multiply"],
        ["korat", "--src", c("linkedlist.mini"), "--pred", "repOK"],
        ["sequences", "--src", c("linkedlist.mini")],
        ["grammar", "--src", c("parens.bnf"), c("intexpr.bnf"), "--budget", "4"],
    ]
    for k, argv in enumerate(runs):
        status = main([*argv, "--config", str(ini), "--out", str(out / f"{k}-{argv[0]}")])
        assert status in (0, 1), argv


def test_11_reproducibility(tmp_path):
    with criterion(11, "byte-identical reruns") as d:
        ini = tmp_path / "corpus.ini"
        ini.write_text(_CORPUS_INI)
        snaps = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            _corpus_runs(out, ini)
            snaps.append({f.relative_to(out).as_posix(): f.read_bytes()
                          for f in sorted(out.rglob("*")) if f.is_file()})
        data = [n for n in snaps[0] if n.endswith((".csv", ".json"))]
        assert data and snaps[0] == snaps[1]
        d.append(f"{len(data)} CSV/JSON files, {len(snaps[0])} artifacts")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
