from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import wide_wrap
from testforge import corpus
from testforge.subjectlang import (
    INT_MAX,
    INT_MIN,
    BranchEvent,
    CheckEvent,
    CheckViolated,
    Heap,
    MalformedTrace,
    ParseError,
    ProgramError,
    Returned,
    RuntimeFault,
    StepBoundExceeded,
    Trace,
    coverage_of,
    eval_call,
    load,
    parse,
    pretty,
    typecheck,
    with_contract,
)
from testforge.subjectlang.ast import Loc

int32 = st.integers(INT_MIN, INT_MAX)

ARITH = load("""
int add(int a, int b) { return a + b; }
int sub(int a, int b) { return a - b; }
int mul(int a, int b) { return a * b; }
int div(int a, int b) { return a / b; }
int mod(int a, int b) { return a % b; }
int neg(int a) { return -a; }
""")


def point(x, y):
    heap = Heap()
    return heap, heap.alloc("Point", {"x": x, "y": y})


def call(p, fn, *args, heap=None, **kw):
    return eval_call(p, fn, list(args), heap, **kw)


# -- parse ---------------------------------------------------------------------------

def test_multiply_listing_shape():
    p = parse(corpus.source("multiply.mini"))
    assert list(p.records) == ["Point"]
    assert [(f.name, f.type) for f in p.records["Point"].fields] == [("x", "int"), ("y", "int")]
    assert list(p.functions) == ["Multiply"]


def test_empty_source():
    p = parse("")
    assert p.records == {} and p.functions == {}


def test_unbalanced_brace_reports_position():
    src = "int f() {\n  if (true) {\n    return 1;\n}\n"
    with pytest.raises(ParseError) as ei:
        parse(src)
    assert ei.value.line == 5
    assert "'}'" in ei.value.message


def test_duplicate_declaration_rejected():
    with pytest.raises(ParseError, match="duplicate"):
        parse("int f() { return 1; }\nint f() { return 2; }")


@pytest.mark.parametrize("name", corpus.PROGRAMS)
def test_pretty_print_is_a_fixed_point(name):
    p = parse(corpus.source(f"{name}.mini"))
    text = pretty(p)
    assert pretty(parse(text)) == text


def _expr(depth: int):
    leaf = st.sampled_from(["a", "b", "0", "1", "-7", "2147483647", "true", "false"])
    if depth == 0:
        return leaf
    sub = _expr(depth - 1)
    return st.one_of(
        leaf,
        st.tuples(sub, st.sampled_from(["+", "-", "*", "/", "%", "<", "==", "&&", "||"]), sub)
        .map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        sub.map(lambda s: f"-({s})"),
        sub.map(lambda s: f"!({s})"),
    )


@given(_expr(3))
@settings(max_examples=200, deadline=None)
def test_parse_pretty_parse_on_generated_expressions(e):
    src = f"int f(int a, int b) {{ bool t = false; t = t; int u = 0; u = u; return 0; }}\nbool g(int a, int b) {{ return {e} == {e}; }}"
    text = pretty(parse(src))
    assert pretty(parse(text)) == text


# -- typecheck -----------------------------------------------------------------------

def test_bsearch_typechecks():
    assert typecheck(parse(corpus.source("bsearch.mini"))) == []


def test_bool_plus_int_is_one_mismatch():
    d = typecheck(parse("int f() { int x = 0; x = true + 1; return x; }"))
    assert len(d) == 1 and "mismatch" in d[0].message


def test_undefined_call_is_one_resolution_error():
    d = typecheck(parse("int f() { return g(1); }"))
    assert len(d) == 1 and "undefined" in d[0].message


def test_result_outside_ensures_rejected():
    assert typecheck(parse("int f() { return result; }"))
    assert typecheck(parse("int f() ensures result > 0 { return 1; }")) == []


def test_contracts_must_be_side_effect_free():
    src = "struct R { int v; }\nint f(R r) requires new R == null { return 1; }"
    assert any("side" in d.message or "alloc" in d.message for d in typecheck(parse(src)))


def test_arity_checked():
    assert typecheck(parse("int g(int a) { return a; }\nint f() { return g(1, 2); }"))


def test_load_collects_diagnostics():
    with pytest.raises(ProgramError) as ei:
        load("int f() { return g(); }", "bad.mini")
    assert str(ei.value).startswith("bad.mini:1:")


def test_with_contract_adds_and_validates():
    p = corpus.program("multiply")
    q = with_contract(p, "Multiply", "ensures", "result == 0")
    assert q.function("Multiply").ensures is not None
    assert p.function("Multiply").ensures is None
    with pytest.raises(ProgramError):
        with_contract(p, "Multiply", "ensures", "result + true")


# -- eval_call -----------------------------------------------------------------------

def test_multiply_table_rows():
    p = corpus.program("multiply")
    heap, pt = point(1, 42)
    assert call(p, "Multiply", pt, heap=heap).outcome == Returned(1)
    heap, pt = point(177407, 109471)
    assert wide_wrap(177407 * 109471) != 42
    assert call(p, "Multiply", pt, heap=heap).outcome == Returned(0)


def test_multiply_null_is_a_null_dereference():
    o = call(corpus.program("multiply"), "Multiply", None).outcome
    assert isinstance(o, RuntimeFault) and o.kind == "null-dereference"


@pytest.mark.parametrize("x,n,expected", [
    (-189424, -140714, 0),
    (157819, 0, 0),
    (1, 1610612736, 2),
    (2, 805306368, 3),
    (11, 1610612736, 12),
    (0, 0, 0),
    (0, 1, 1),
    (0, 3, 1),
    (1, 6, 2),
    (50, 96, 51),
])
def test_bsearch_table_rows(x, n, expected):
    r = call(corpus.program("bsearch"), "BSearch", x, n)
    assert r.outcome == Returned(expected)
    assert r.trace.failed_checks() == []


def test_bsearch_overflow_fails_the_check():
    # by default a failed check is recorded and execution goes on; here the
    # wrapped midpoint keeps the loop alive until the step bound
    r = call(corpus.program("bsearch"), "BSearch", 1073741888, 1719676992, step_budget=10_000)
    assert r.trace.failed_checks()
    assert wide_wrap(1073741888 + 1719676992) // 2 < 1073741888 <= (1073741888 + 1719676992) // 2
    strict = call(corpus.program("bsearch"), "BSearch", 1073741888, 1719676992, strict=True)
    assert isinstance(strict.outcome, CheckViolated)


@pytest.mark.parametrize("day,year", [(0, 1980), (367, 1981), (1023, 1982), (2561, 1987), (7874, 2001)])
def test_leap_year_table_rows(day, year):
    assert call(corpus.program("leapyear"), "FromDayToYear", day).outcome == Returned(year)


@pytest.mark.parametrize("day", [366, 7671])
def test_leap_year_nontermination_hits_the_step_bound(day):
    r = call(corpus.program("leapyear"), "FromDayToYear", day, step_budget=10**6)
    assert isinstance(r.outcome, StepBoundExceeded)
    assert r.steps == 10**6


def test_leap_year_rule():
    p = corpus.program("leapyear")
    for y in (1900, 1980, 1981, 2000, 2024, 2100):
        expected = (y % 4 == 0 and y % 100 != 0) or y % 400 == 0
        assert call(p, "IsLeapYear", y).outcome == Returned(expected)


def test_division_semantics():
    assert call(ARITH, "div", -7, 2).outcome == Returned(-3)
    assert call(ARITH, "mod", -7, 2).outcome == Returned(-1)
    assert call(ARITH, "mod", 7, -2).outcome == Returned(1)
    assert call(ARITH, "div", INT_MIN, -1).outcome == Returned(INT_MIN)
    assert call(ARITH, "mod", INT_MIN, -1).outcome == Returned(0)
    for fn in ("div", "mod"):
        o = call(ARITH, fn, 1, 0).outcome
        assert isinstance(o, RuntimeFault) and o.kind == "div-by-zero"


def test_wraparound_against_wide_integers():
    r = random.Random(7)
    picks = [INT_MIN, -1, 0, 1, INT_MAX]
    for _ in range(10_000):
        a = r.choice(picks) if r.random() < 0.1 else r.randint(INT_MIN, INT_MAX)
        b = r.choice(picks) if r.random() < 0.1 else r.randint(INT_MIN, INT_MAX)
        assert call(ARITH, "add", a, b).outcome == Returned(wide_wrap(a + b))
        assert call(ARITH, "mul", a, b).outcome == Returned(wide_wrap(a * b))


@given(int32, int32)
def test_sub_and_neg_wrap(a, b):
    assert call(ARITH, "sub", a, b).outcome == Returned(wide_wrap(a - b))
    assert call(ARITH, "neg", a).outcome == Returned(wide_wrap(-a))


def test_short_circuit_guards_null():
    p = load("struct R { int v; }\nbool f(R r) { return r != null && r.v > 0; }")
    assert call(p, "f", None).outcome == Returned(False)


def test_check_records_both_outcomes():
    p = load("int f(int a) { check(a > 0); check(a > 5); return a; }")
    r = call(p, "f", 3)
    assert [e.value for e in r.trace.events if isinstance(e, CheckEvent)] == [True, False]
    assert r.outcome == Returned(3)


def test_caller_heap_untouched():
    p = load("struct R { int v; }\nvoid f(R r) { r.v = 9; }")
    heap = Heap()
    h = heap.alloc("R", {"v": 1})
    r = eval_call(p, "f", [h], heap)
    assert heap.read(h, "v") == 1 and r.heap.read(h, "v") == 9


def test_dangling_handle_rejected():
    from testforge.subjectlang import Handle

    with pytest.raises(ValueError):
        call(corpus.program("multiply"), "Multiply", Handle(3), heap=Heap())


@given(int32, int32)
@settings(max_examples=50, deadline=None)
def test_deterministic(x, n):
    p = corpus.program("bsearch")
    a, b = call(p, "BSearch", x, n, step_budget=5000), call(p, "BSearch", x, n, step_budget=5000)
    assert a.outcome == b.outcome and a.trace == b.trace and a.steps == b.steps


@given(st.integers(0, 3000), st.integers(0, 2000))
@settings(max_examples=50, deadline=None)
def test_budget_monotone(day, extra):
    p = corpus.program("leapyear")
    r = call(p, "FromDayToYear", day, step_budget=10**6)
    if isinstance(r.outcome, Returned):
        r2 = call(p, "FromDayToYear", day, step_budget=r.steps + extra)
        assert r2.outcome == r.outcome
        assert r2.trace == r.trace


# -- coverage ------------------------------------------------------------------------

def test_multiply_full_coverage_from_table_inputs():
    p = corpus.program("multiply")
    traces = []
    for x, y in [(1, 42), (177407, 109471)]:
        heap, pt = point(x, y)
        traces.append(call(p, "Multiply", pt, heap=heap).trace)
    rep = coverage_of(p, "Multiply", traces)
    assert rep.branch_ratio == (2, 2)
    covered, total = rep.statement_ratio
    assert covered == total > 0


def test_no_traces_covers_nothing():
    p = corpus.program("multiply")
    rep = coverage_of(p, "Multiply", [])
    assert rep.statement_ratio[0] == 0 and rep.branch_ratio == (0, 2) and rep.distinct_paths == 0


def test_bsearch_table_paths():
    p = corpus.program("bsearch")
    rows = [(-189424, -140714), (157819, 0), (1, 1610612736), (2, 805306368), (11, 1610612736)]
    traces = [call(p, "BSearch", x, n).trace for x, n in rows]
    rep = coverage_of(p, "BSearch", traces)
    # the first two rows both skip the loop, so five rows give four paths
    assert traces[0].signature() == traces[1].signature()
    assert rep.distinct_paths == len({t.signature() for t in traces}) == 4
    # every covered location shows up in some trace
    seen = {e.loc for t in traces for e in t.events}
    assert {loc for loc, _ in rep.covered_branch_sides} <= seen
    assert rep.covered_statements <= set().union(*(t.statements for t in traces))


def test_check_obligations_tallied():
    p = corpus.program("bsearch")
    traces = [call(p, "BSearch", 1, 6).trace, call(p, "BSearch", 1073741888, 1719676992).trace]
    assert coverage_of(p, "BSearch", traces).check_ratio == (2, 2)


def test_malformed_trace_rejected():
    p = corpus.program("multiply")
    bogus = Trace([BranchEvent(Loc("Nowhere", 1, 1), True)])
    with pytest.raises(MalformedTrace):
        coverage_of(p, "Multiply", [bogus])
