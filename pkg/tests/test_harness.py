from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from oracles import constructed_lists, parse_dot
from testforge import corpus
from testforge.harness import (
    DEFAULT_SEED,
    EXIT_FINDINGS,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    RunConfig,
    Strategy,
    compare_strategies,
    emit_table,
    execute,
    load_config,
    main,
    parse_interval,
    parse_ops,
)
from testforge.subjectlang import Heap
from testforge.subjectlang.ast import Loc
from testforge.subjectlang.interp import BranchEvent, CheckEvent
from testforge.testcase import case_from_dict, decode_signature, encode_signature, run_case

MUL = corpus.program("multiply")

KORAT_INI = """
[run]
pred = repOK

[korat]
finitization =
    root LinkedList
    pool LinkedListElement 5
    LinkedList.size = 0..5
    LinkedListElement.Data = 0..0
"""

SEQ_INI = """
[sequences]
state = LinkedList
invariant = repOK
ops = {op}(0..9) removeFirst
max_len = 3
"""

RANDOM_INI = """
[random]
trials = 10000
ensures = result == 0
domain.p.x = 1..50
domain.p.y = 1..50
"""


def table1_cases():
    out = []
    for x, y in [(1, 42), (177407, 109471)]:
        heap = Heap()
        pt = heap.alloc("Point", {"x": x, "y": y})
        out.append(run_case(MUL, "Multiply", [pt], heap)[0])
    return out


def write(tmp_path: Path, name: str, text: str) -> str:
    f = tmp_path / name
    f.write_text(text)
    return str(f)


def files(d: Path) -> dict[str, bytes]:
    return {f.name: f.read_bytes() for f in sorted(d.iterdir())}


# -- emit_table ------------------------------------------------------------------------

def test_table1_text():
    text = emit_table(table1_cases(), "text")
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[0].split() == ["Result", "Function", "Input", "Output", "Verdict", "Message"]
    assert lines[2].split()[0] == "OK" and "Point{x=1, y=42}" in lines[2] and lines[2].split()[-2] == "1"
    assert lines[3].split()[0] == "OK" and lines[3].split()[-2] == "0"


def test_csv_and_json_carry_the_same_rows():
    cases = table1_cases()
    rows = list(csv.DictReader(io.StringIO(emit_table(cases, "csv"))))
    data = json.loads(emit_table(cases, "json"))
    assert [r["input"] for r in rows] == [c.render_args() for c in cases]
    assert [r["verdict"] for r in rows] == [d["verdict"] for d in data] == ["Pass", "Pass"]
    assert [r["output"] for r in rows] == ["1", "0"]


@pytest.mark.parametrize("fmt", ["text", "csv", "json"])
def test_empty_table_is_header_only(fmt):
    out = emit_table([], fmt)
    if fmt == "json":
        assert json.loads(out) == []
    else:
        assert len(out.splitlines()) == (2 if fmt == "text" else 1)


def test_json_round_trip():
    cases = table1_cases()
    back = [case_from_dict(d) for d in json.loads(emit_table(cases, "json"))]
    assert back == cases


_EVENTS = [BranchEvent(Loc("f", 3, 5), True), BranchEvent(Loc("f", 3, 5), False),
           BranchEvent(Loc("g", 9, 1), True), CheckEvent(Loc("f", 4, 2), False)]


@given(st.lists(st.tuples(st.lists(st.sampled_from(_EVENTS), min_size=1, max_size=6), st.integers(1, 40)),
                max_size=6))
@settings(max_examples=200)
def test_signature_encoding_round_trips(blocks):
    sig = tuple(e for block, k in blocks for _ in range(k) for e in block)
    enc = json.loads(json.dumps(encode_signature(sig)))
    assert decode_signature(enc) == sig
    assert sum(len(b) for _, b in enc["runs"]) <= max(len(sig), 1)


def test_loop_signature_stays_small():
    sig = (_EVENTS[0], _EVENTS[3]) * 500_000
    enc = encode_signature(sig)
    assert enc["runs"] == [[500_000, [0, 1]]] and len(enc["sites"]) == 2


def test_unknown_format():
    with pytest.raises(ValueError):
        emit_table([], "xml")


# -- run / main ------------------------------------------------------------------------

def test_explore_finds_hidden_bug(tmp_path):
    out = tmp_path / "o"
    rc = main(["explore", "--src", corpus.path("multiply_pex.mini"), "--fn", "Multiply", "--out", str(out)])
    assert rc == EXIT_FINDINGS
    assert set(files(out)) == {"Multiply.table.txt", "Multiply.table.csv", "Multiply.table.json",
                               "Multiply.coverage.json", "stats.json"}
    rows = list(csv.DictReader(io.StringIO((out / "Multiply.table.csv").read_text())))
    bug = [r for r in rows if r["verdict"] == "CheckViolation"]
    assert bug and "hidden bug!" in bug[0]["message"] and bug[0]["result"] == "FAIL"
    case = case_from_dict(next(d for d in json.loads((out / "Multiply.table.json").read_text())
                               if d["verdict"] == "CheckViolation"))
    obj = case.heap.get(case.args[0])
    assert obj.fields["x"] * obj.fields["y"] == 42
    cov = json.loads((out / "Multiply.coverage.json").read_text())
    assert cov["branches"] == {"covered": 2, "total": 2}


def test_explore_without_findings_exits_zero(tmp_path):
    rc = main(["explore", "--src", corpus.path("multiply.mini"), "--fn", "Multiply", "--out", str(tmp_path / "o")])
    assert rc == EXIT_OK


def test_missing_function_writes_nothing(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["explore", "--src", corpus.path("multiply.mini"), "--out", str(out)]) == EXIT_USAGE
    assert main(["explore", "--src", corpus.path("multiply.mini"), "--fn", "Nope", "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()
    assert "unknown function" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["explore", "--src", "/no/such/file.mini", "--fn", "f"],
    ["bogus", "--src", "x"],
    ["explore"],
])
def test_usage_errors(tmp_path, argv):
    assert main([*argv, "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert not (tmp_path / "o").exists()


def test_type_error_in_source_is_usage_error(tmp_path):
    src = write(tmp_path, "bad.mini", "int f(int a) { return b; }")
    assert main(["explore", "--src", src, "--fn", "f", "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_korat_five_nodes(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = write(tmp_path, "k.ini", KORAT_INI)
    rc = main(["korat", "--config", cfg, "--src", corpus.path("linkedlist.mini"), "--out", str(out)])
    assert rc == EXIT_OK
    dots = [n for n in files(out) if n.endswith(".dot")]
    assert len(dots) == constructed_lists(5) == 6
    for n in dots:
        parse_dot((out / n).read_text())
    stats = json.loads((out / "stats.json").read_text())["korat"]
    assert stats["classes"] == 6 and stats["candidates"] > 0
    assert "classes=6" in capsys.readouterr().out


@pytest.mark.parametrize("op,status", [("add", EXIT_OK), ("addNoPrev", EXIT_FINDINGS)])
def test_sequences_exit_code(tmp_path, op, status):
    out = tmp_path / "o"
    cfg = write(tmp_path, "s.ini", SEQ_INI.format(op=op))
    rc = main(["sequences", "--config", cfg, "--src", corpus.path("linkedlist.mini"), "--out", str(out)])
    assert rc == status
    assert {"LinkedList.sequences.csv", "LinkedList.states.dot", "stats.json"} <= set(files(out))


def test_random_mode_reports_shrunk_counterexample(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, "r.ini", RANDOM_INI)
    rc = main(["random", "--config", cfg, "--src", corpus.path("multiply.mini"), "--fn", "Multiply",
               "--out", str(out)])
    assert rc == EXIT_FINDINGS
    stats = json.loads((out / "stats.json").read_text())["random"]
    assert stats["trials"] == 10_000 and stats["failures"] > 0
    assert stats["counterexample"]["verdict"] == "ContractViolation"
    rows = list(csv.DictReader(io.StringIO((out / "Multiply.table.csv").read_text())))
    assert len({(r["input"], r["verdict"]) for r in rows}) == len(rows)


def test_grammar_mode(tmp_path):
    out = tmp_path / "o"
    assert main(["grammar", "--src", corpus.path("parens.bnf"), "--budget", "4", "--out", str(out)]) == EXIT_OK
    assert (out / "parens.strings.txt").read_text().splitlines() == ["a", "(a)", "((a))", "(((a)))"]


def test_format_flag_limits_outputs(tmp_path):
    out = tmp_path / "o"
    main(["explore", "--src", corpus.path("multiply.mini"), "--fn", "Multiply", "--out", str(out),
          "--format", "csv"])
    assert [n for n in files(out) if ".table." in n] == ["Multiply.table.csv"]


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "r.ini", RANDOM_INI)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        main(["random", "--config", cfg, "--src", corpus.path("multiply.mini"), "--fn", "Multiply",
              "--out", str(out)])
        main(["explore", "--src", corpus.path("bsearch.mini"), "--fn", "BSearch", "--budget", "12",
              "--out", str(out)])
        outs.append(files(out))
    assert outs[0] == outs[1]


def test_execute_verdicts_match_replay():
    cfg = RunConfig("explore", [corpus.path("multiply_pex.mini")], "Multiply")
    res = execute(cfg)
    assert res.status == EXIT_FINDINGS and len(res.cases) == 3


# -- config ----------------------------------------------------------------------------

def test_config_sections():
    cfg = load_config(RANDOM_INI + "\n[explore]\npolicy = bfs\nmax_queries = 7\n[run]\nseed = 9\nformat = csv, json\n")
    assert cfg.trials == 10_000 and cfg.ensures == "result == 0"
    assert cfg.domains == {"p.x": (1, 50), "p.y": (1, 50)}
    assert cfg.policy == "bfs" and cfg.max_queries == 7
    assert cfg.seed == 9 and cfg.formats == ("csv", "json")


def test_default_seed_is_fixed():
    assert RunConfig("explore").seed == DEFAULT_SEED


def test_src_relative_to_config(tmp_path):
    origin = str(tmp_path / "c.ini")
    cfg = load_config("[run]\nsrc = a.mini b.mini\n", origin=origin)
    assert cfg.sources == [str(tmp_path / "a.mini"), str(tmp_path / "b.mini")]


@pytest.mark.parametrize("text,msg", [
    ("[nope]\nx = 1\n", "unknown section"),
    ("[run]\ncolour = red\n", "unknown key"),
    ("[explore]\nmax_queries = lots\n", "integer"),
    ("[random]\ndomain.a = 5..1\n", "bad interval"),
    ("[random]\ndomain.a = 1-5\n", "interval"),
    ("no section here\n", "config"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        load_config(text)


def test_bad_config_key_exits_2(tmp_path):
    cfg = write(tmp_path, "bad.ini", "[run]\ncolour = red\n")
    out = tmp_path / "o"
    rc = main(["explore", "--config", cfg, "--src", corpus.path("multiply.mini"), "--fn", "Multiply",
               "--out", str(out)])
    assert rc == EXIT_USAGE and not out.exists()


def test_parse_ops_and_intervals():
    ops = parse_ops("add(0..9) removeFirst put(-1..1, 2..3)")
    assert [(o.name, o.domains) for o in ops] == [("add", ((0, 9),)), ("removeFirst", ()),
                                                  ("put", ((-1, 1), (2, 3)))]
    assert parse_interval(" -5 .. 5") == (-5, 5)


@pytest.mark.parametrize("cfg", [
    RunConfig("korat", ["x.mini"], pred="repOK"),
    RunConfig("sequences", ["x.mini"], state="LinkedList"),
    RunConfig("random", ["x.mini"]),
    RunConfig("explore", []),
    RunConfig("explore", ["x.mini"], "f", formats=("xml",)),
    RunConfig("explore", ["x.mini"], "f", policy="random"),
])
def test_mode_requirements(cfg):
    with pytest.raises(ConfigError):
        cfg.validate()


# -- compare_strategies ----------------------------------------------------------------

def test_compare_needs_two_strategies():
    with pytest.raises(ValueError):
        compare_strategies(MUL, "Multiply", [Strategy("c", "concolic")])


def test_concolic_beats_random_over_int32():
    rows = compare_strategies(MUL, "Multiply", [
        Strategy("concolic", "concolic", budget=100),
        Strategy("random", "random", budget=10_000),
    ])
    by = {r.name: r for r in rows}
    assert by["concolic"].branches == (2, 2)
    assert by["random"].branches == (1, 2)
    assert all(r.seconds >= 0 and r.findings == 0 for r in rows)


def test_random_on_small_domain_covers_both_branches():
    small = {"p.x": (0, 50), "p.y": (0, 50)}
    rows = compare_strategies(MUL, "Multiply", [
        Strategy("concolic", "concolic", small, budget=100),
        Strategy("random", "random", small, budget=10_000),
    ])
    assert [r.branches for r in rows] == [(2, 2), (2, 2)]


def test_compare_cli(tmp_path, capsys):
    cfg = write(tmp_path, "r.ini", RANDOM_INI.replace("10000", "2000"))
    assert main(["compare", "--src", corpus.path("multiply.mini"), "--fn", "Multiply", "--config", cfg]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].split()[0] == "Strategy"
    assert [line.split()[0] for line in out[1:]] == ["concolic", "random-int32", "random-domains"]
