"""Command-line front end: load subjects, run an engine, write tables and reports.

Exit status is 0 when nothing was found, 1 when a contract, check or
invariant violation was found, and 2 on usage or configuration errors (in
which case no output file is written).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence as Seq

from . import concolic, heapgen, randgen, seqgen
from .subjectlang import ProgramError, coverage_of, load, with_contract
from .subjectlang import ast as A
from .subjectlang.interp import DEFAULT_STEP_BUDGET, eval_call
from .subjectlang.values import INT_MAX, INT_MIN
from .testcase import (
    BOUND_EXCEEDED,
    FINDINGS,
    PASS,
    TestCase,
    case_to_dict,
    replay_matches,
    run_case,
)

MODES = ("explore", "korat", "random", "grammar", "sequences", "all")
FORMATS = ("text", "csv", "json")
DEFAULT_SEED = 20240229
EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2
MARKS = {PASS: "OK", BOUND_EXCEEDED: "BOUND"}


class ConfigError(Exception):
    """Bad command line, config file or subject program."""


@dataclass
class RunConfig:
    mode: str
    sources: list[str] = field(default_factory=list)
    function: Optional[str] = None
    pred: Optional[str] = None
    seed: int = DEFAULT_SEED
    budget: Optional[int] = None
    out: str = "testforge-out"
    formats: tuple[str, ...] = FORMATS
    step_budget: int = DEFAULT_STEP_BUDGET
    # explore
    policy: str = "dfs"
    max_queries: int = concolic.DEFAULT_MAX_QUERIES
    max_conditions: int = concolic.DEFAULT_MAX_CONDITIONS
    domains: dict[str, tuple[int, int]] = field(default_factory=dict)
    # random
    trials: int = 1000
    ensures: Optional[str] = None
    # korat
    finitization: Optional[str] = None
    prune: bool = True
    # grammar
    grammar_mode: str = "enumerate"
    depth: int = 6
    count: int = 100
    # sequences
    state: Optional[str] = None
    invariant: Optional[str] = None
    operations: tuple[seqgen.Operation, ...] = ()
    max_len: int = 3
    arg_budget: int = 1

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if not self.sources:
            raise ConfigError("no source files given (--src)")
        for f in self.formats:
            if f not in FORMATS:
                raise ConfigError(f"unknown format {f!r}")
        if self.policy not in concolic.POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        needs_fn = self.mode in ("explore", "random", "all")
        if needs_fn and not self.function:
            raise ConfigError(f"mode {self.mode} needs a function (--fn)")
        if self.mode == "korat" and not (self.pred and self.finitization):
            raise ConfigError("korat mode needs --pred and a finitization in the config")
        if self.mode == "sequences" and not (self.state and self.invariant and self.operations):
            raise ConfigError("sequences mode needs state, invariant and ops in the config")


# -- config file ------------------------------------------------------------------------

_KEYS = {
    "run": {"src", "mode", "fn", "pred", "seed", "budget", "out", "format", "step_budget"},
    "explore": {"policy", "max_conditions", "max_queries"},
    "random": {"trials", "ensures"},
    "korat": {"finitization", "finitization_file", "prune"},
    "grammar": {"mode", "depth", "count"},
    "sequences": {"state", "invariant", "ops", "max_len", "arg_budget"},
}
_INTERVAL = re.compile(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")
_OP = re.compile(r"(\w+)(?:\(([^)]*)\))?")


def parse_interval(text: str) -> tuple[int, int]:
    m = _INTERVAL.match(text)
    if not m:
        raise ConfigError(f"expected an interval lo..hi, got {text!r}")
    lo, hi = int(m[1]), int(m[2])
    if lo > hi or lo < INT_MIN or hi > INT_MAX:
        raise ConfigError(f"bad interval {text!r}")
    return lo, hi


def parse_ops(text: str) -> tuple[seqgen.Operation, ...]:
    """``add(0..9) removeFirst`` -> operations with per-argument intervals."""
    ops = []
    for m in _OP.finditer(text):
        doms = tuple(parse_interval(x) for x in m[2].split(",")) if m[2] else ()
        ops.append(seqgen.Operation(m[1], doms))
    return tuple(ops)


def _int(section: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}") from None


def load_config(text: str, base: Optional[RunConfig] = None, origin: str = "<config>") -> RunConfig:
    """Read an INI-style config into a :class:`RunConfig` (sections per mode).

    Domains are ``domain.<path> = lo..hi`` keys in the explore or random
    section. Unknown sections or keys are errors.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case, domain paths are case sensitive
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as e:
        raise ConfigError(f"{origin}: {e}") from None
    cfg = base or RunConfig(mode="")
    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, value in cp.items(section):
            if key.startswith("domain.") and section in ("explore", "random"):
                cfg.domains[key[len("domain."):]] = parse_interval(value)
                continue
            if key not in _KEYS[section]:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
            _apply(cfg, section, key, value.strip(), origin)
    return cfg


def _apply(cfg: RunConfig, section: str, key: str, value: str, origin: str) -> None:
    if section == "run":
        if key == "src":
            # relative to the config file
            base = Path(origin).parent if origin != "<config>" else Path(".")
            cfg.sources = [str(base / v) for v in value.split()]
        elif key == "mode":
            cfg.mode = value
        elif key == "fn":
            cfg.function = value
        elif key == "pred":
            cfg.pred = value
        elif key == "out":
            cfg.out = value
        elif key == "format":
            cfg.formats = tuple(x.strip() for x in value.split(",") if x.strip())
        else:
            setattr(cfg, key, _int(section, key, value))
    elif section == "explore":
        if key == "policy":
            cfg.policy = value
        elif key == "max_queries":
            cfg.max_queries = _int(section, key, value)
        else:
            cfg.max_conditions = _int(section, key, value)
    elif section == "random":
        if key == "trials":
            cfg.trials = _int(section, key, value)
        else:
            cfg.ensures = value
    elif section == "korat":
        if key == "finitization":
            cfg.finitization = value + "\n"
        elif key == "finitization_file":
            path = Path(origin).parent / value if origin != "<config>" else Path(value)
            try:
                cfg.finitization = path.read_text()
            except OSError as e:
                raise ConfigError(f"cannot read finitization {path}: {e.strerror}") from None
        else:
            cfg.prune = value.lower() in ("1", "yes", "true", "on")
    elif section == "grammar":
        if key == "mode":
            cfg.grammar_mode = value
        else:
            setattr(cfg, key, _int(section, key, value))
    elif section == "sequences":
        if key == "ops":
            cfg.operations = parse_ops(value)
        elif key in ("state", "invariant"):
            setattr(cfg, key, value)
        else:
            setattr(cfg, key, _int(section, key, value))


# -- tables -----------------------------------------------------------------------------

_COLUMNS = ("result", "function", "input", "output", "verdict", "message", "provenance")


def _mark(verdict: str) -> str:
    return MARKS.get(verdict, "FAIL")


def _rows(cases: Seq[TestCase]) -> list[tuple[str, ...]]:
    return [(_mark(c.verdict), c.function, c.render_args(), c.render_outcome(), c.verdict,
             c.message or "", c.provenance) for c in cases]


def emit_table(cases: Seq[TestCase], fmt: str) -> str:
    """Render cases as a text table (OK/FAIL/BOUND marks), CSV or JSON."""
    if fmt == "json":
        return json.dumps([case_to_dict(c) for c in cases], indent=2) + "\n"
    rows = _rows(cases)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    header = ("Result", "Function", "Input", "Output", "Verdict", "Message")
    table = [header, *(r[:6] for r in rows)]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _sequence_table(seqs: list[seqgen.Sequence], fmt: str) -> str:
    rows = [(MARKS.get(s.verdict, "FAIL"), s.render(), f"s{s.state}", s.verdict, s.message or "")
            for s in seqs]
    cols = ("result", "sequence", "state", "verdict", "message")
    if fmt == "json":
        return json.dumps([dict(zip(cols, r)) | {"calls": [[op, list(args)] for op, args in s.calls]}
                           for r, s in zip(rows, seqs)], indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        w.writerows(rows)
        return buf.getvalue()
    table = [tuple(c.capitalize() for c in cols), *rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(cols))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


_EXT = {"text": "txt", "csv": "csv", "json": "json"}


# -- running ------------------------------------------------------------------------------

@dataclass
class RunResult:
    status: int
    files: dict[str, str] = field(default_factory=dict)  # relative name -> content
    cases: list[TestCase] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)
    findings: int = 0  # failing sequences, which are not test cases


def _load_programs(cfg: RunConfig) -> list[tuple[str, A.Program]]:
    out = []
    for src in cfg.sources:
        if src.endswith(".bnf"):
            continue
        try:
            text = Path(src).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {src}: {e.strerror}") from None
        try:
            out.append((src, load(text, src)))
        except ProgramError as e:
            raise ConfigError(str(e)) from None
    return out


def _program_with(programs, name: str) -> A.Program:
    for _, p in programs:
        if name in p.functions:
            return p
    raise ConfigError(f"unknown function {name!r}")


def _full_domains(p: A.Program, fn: str, given: dict) -> dict:
    doms = {}
    for s in randgen.slots(p, fn):
        if s.kind == "int":
            doms[s.path] = given.get(s.path, (INT_MIN, INT_MAX))
    return doms


def _verify(p: A.Program, cases: list[TestCase], step_budget: int) -> None:
    for c in cases:
        if not replay_matches(p, c, step_budget=step_budget):
            raise AssertionError(f"replay of {c.function}({c.render_args()}) disagrees with its verdict")


def _emit_cases(res: RunResult, cfg: RunConfig, p: A.Program, fn: str, cases: list[TestCase]) -> None:
    _verify(p, cases, cfg.step_budget)
    for fmt in cfg.formats:
        res.files[f"{fn}.table.{_EXT[fmt]}"] = emit_table(cases, fmt)
    traces = [eval_call(p, fn, list(c.args), c.heap, cfg.step_budget).trace for c in cases]
    res.files[f"{fn}.coverage.json"] = json.dumps(coverage_of(p, fn, traces).to_dict(), indent=2) + "\n"
    res.cases.extend(cases)


def _run_explore(res: RunResult, cfg: RunConfig, programs) -> None:
    p = _program_with(programs, cfg.function)
    limits = concolic.Limits(policy=cfg.policy, max_conditions=cfg.max_conditions,
                             max_queries=cfg.budget or cfg.max_queries,
                             step_budget=cfg.step_budget)
    cases, state = concolic.explore(p, cfg.function, limits, domains=cfg.domains or None)
    _emit_cases(res, cfg, p, cfg.function, cases)
    res.stats["explore"] = state.counters()


def _run_random(res: RunResult, cfg: RunConfig, programs) -> None:
    p = _program_with(programs, cfg.function)
    fn = cfg.function
    if cfg.ensures:
        try:
            p = with_contract(p, fn, "ensures", cfg.ensures)
        except ProgramError as e:
            raise ConfigError(str(e)) from None
    doms = _full_domains(p, fn, cfg.domains)
    trials = cfg.budget or cfg.trials
    try:
        batch = randgen.gen_random(p, fn, doms, cfg.seed, trials)
    except (randgen.DomainTooStrict, randgen.DomainError) as e:
        raise ConfigError(str(e)) from None
    seen: set = set()
    cases = []
    for smp in batch:
        case, _ = run_case(p, fn, smp.args, smp.heap, step_budget=cfg.step_budget,
                           provenance="boundary" if smp.boundary else "random")
        key = (case.signature, case.verdict)
        if key not in seen:
            seen.add(key)
            cases.append(case)
    stats = {"trials": len(batch), "rejected": batch.rejected,
             "distinct_paths": len({sig for sig, _ in seen})}
    if p.function(fn).ensures is not None:
        rep = randgen.check_property(p, fn, doms, cfg.seed, trials, step_budget=cfg.step_budget)
        stats["failures"] = len(rep.failures)
        if rep.counterexample is not None:
            ce = rep.counterexample
            stats["counterexample"] = {"input": ce.render(), "verdict": ce.verdict,
                                       "shrink_steps": rep.shrink_steps}
            case, _ = run_case(p, fn, ce.args, ce.heap, step_budget=cfg.step_budget, provenance="shrunk")
            # the sampled row already shows it when shrinking made no progress
            if all(c.render_args() != case.render_args() for c in cases):
                cases.append(case)
    _emit_cases(res, cfg, p, fn, cases)
    res.stats["random"] = stats


def _run_korat(res: RunResult, cfg: RunConfig, programs) -> None:
    p = _program_with(programs, cfg.pred)
    try:
        fin = heapgen.finitize(cfg.finitization, p)
        st = heapgen.GenStats()
        structures = list(heapgen.generate(p, cfg.pred, fin, prune=cfg.prune, stats=st,
                                           step_budget=cfg.step_budget))
    except heapgen.FinitizationError as e:
        raise ConfigError(str(e)) from None
    for k, s in enumerate(structures):
        res.files[f"structure-{k}.dot"] = heapgen.to_dot(s, f"structure_{k}")
    res.stats["korat"] = {"candidates": st.explored, "valid": st.valid, "classes": st.classes,
                          "skipped": st.skipped, "faults": st.faults, "bound": st.bound}
    res.messages.append(st.line())
    fn = cfg.function
    if fn and cfg.mode == "korat":
        fdef = p.function(fn)
        if [x.type for x in fdef.params] != [fin.root]:
            raise ConfigError(f"{fn} must take a single {fin.root} to run on generated structures")
        cases = [run_case(p, fn, [s.root], s.heap, step_budget=cfg.step_budget, provenance="korat")[0]
                 for s in structures]
        _emit_cases(res, cfg, p, fn, cases)


def _run_grammar(res: RunResult, cfg: RunConfig) -> None:
    files = [s for s in cfg.sources if s.endswith(".bnf")]
    if not files:
        raise ConfigError("grammar mode needs a .bnf source")
    for src in files:
        try:
            g = randgen.parse_grammar(Path(src).read_text())
            strings = randgen.gen_from_grammar(g, cfg.grammar_mode, max_depth=cfg.budget or cfg.depth,
                                               seed=cfg.seed, count=cfg.count)
        except OSError as e:
            raise ConfigError(f"cannot read {src}: {e.strerror}") from None
        except (randgen.GrammarError, ValueError) as e:
            raise ConfigError(f"{src}: {e}") from None
        stem = Path(src).stem
        res.files[f"{stem}.strings.txt"] = "".join(s + "\n" for s in strings)
        res.stats.setdefault("grammar", {})[stem] = {"strings": len(strings), "truncated": strings.truncated}


def _run_sequences(res: RunResult, cfg: RunConfig, programs) -> None:
    p = _program_with(programs, cfg.invariant)
    api = seqgen.ApiSpec(cfg.state, cfg.invariant, cfg.operations)
    try:
        graph, seqs = seqgen.explore_sequences(p, api, cfg.budget or cfg.max_len, cfg.arg_budget,
                                               seed=cfg.seed, step_budget=cfg.step_budget)
    except seqgen.ApiError as e:
        raise ConfigError(str(e)) from None
    for fmt in cfg.formats:
        res.files[f"{cfg.state}.sequences.{_EXT[fmt]}"] = _sequence_table(seqs, fmt)
    res.files[f"{cfg.state}.states.dot"] = seqgen.graph_to_dot(graph)
    failing = [s for s in seqs if s.verdict not in (PASS, BOUND_EXCEEDED)]
    res.stats["sequences"] = {"sequences": len(seqs), "states": len(graph.nodes),
                              "edges": len(graph.edges), "failing": len(failing)}
    res.findings += len(failing)


def execute(cfg: RunConfig) -> RunResult:
    """Run the configured engines in memory; raises :class:`ConfigError` on bad input."""
    cfg.validate()
    for src in cfg.sources:
        if not os.path.isfile(src):
            raise ConfigError(f"cannot read {src}: no such file")
    programs = _load_programs(cfg)
    if cfg.mode != "grammar" and not programs:
        raise ConfigError("no subject program among the sources")
    res = RunResult(EXIT_OK)
    mode = cfg.mode
    if mode in ("explore", "all"):
        _run_explore(res, cfg, programs)
    if mode == "random" or mode == "all" and cfg.domains:
        _run_random(res, cfg, programs)
    if mode == "korat" or mode == "all" and cfg.pred and cfg.finitization:
        _run_korat(res, cfg, programs)
    if mode == "grammar" or mode == "all" and any(s.endswith(".bnf") for s in cfg.sources):
        _run_grammar(res, cfg)
    if mode == "sequences" or mode == "all" and cfg.operations:
        _run_sequences(res, cfg, programs)
    found = res.findings or any(c.verdict in FINDINGS for c in res.cases)
    res.status = EXIT_FINDINGS if found else EXIT_OK
    res.files["stats.json"] = json.dumps(res.stats, indent=2, sort_keys=True) + "\n"
    return res


def run(cfg: RunConfig) -> int:
    """Execute and write artifacts under ``cfg.out``; return the exit status."""
    try:
        res = execute(cfg)
    except ConfigError as e:
        print(f"testforge: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, content in sorted(res.files.items()):
        tmp = out / (name + ".tmp")
        tmp.write_text(content)
        os.replace(tmp, out / name)
    for m in res.messages:
        print(m)
    return res.status


# -- strategy comparison ------------------------------------------------------------------

@dataclass
class Strategy:
    name: str
    kind: str  # "concolic" | "random"
    domains: dict[str, tuple[int, int]] = field(default_factory=dict)
    budget: int = 1000  # solver queries or trials
    seed: int = DEFAULT_SEED


@dataclass
class StrategyResult:
    name: str
    branches: tuple[int, int]
    statements: tuple[int, int]
    paths: int
    findings: int
    seconds: float


def compare_strategies(p: A.Program, fn: str, strategies: list[Strategy],
                       step_budget: int = DEFAULT_STEP_BUDGET) -> list[StrategyResult]:
    """Coverage, distinct paths and findings per strategy, all replayed the same way."""
    if len(strategies) < 2:
        raise ValueError("comparison needs at least two strategies")
    out = []
    for st in strategies:
        t0 = time.perf_counter()
        if st.kind == "concolic":
            cases, _ = concolic.explore(p, fn, concolic.Limits(max_queries=st.budget, step_budget=step_budget),
                                        domains=st.domains or None)
            inputs = [(list(c.args), c.heap) for c in cases]
        elif st.kind == "random":
            batch = randgen.gen_random(p, fn, _full_domains(p, fn, st.domains), st.seed, st.budget)
            inputs = [(list(s.args), s.heap) for s in batch]
        else:
            raise ValueError(f"unknown strategy kind {st.kind!r}")
        results = [run_case(p, fn, a, h, step_budget=step_budget)[0] for a, h in inputs]
        traces = [eval_call(p, fn, a, h, step_budget).trace for a, h in inputs]
        elapsed = time.perf_counter() - t0
        cov = coverage_of(p, fn, traces)
        out.append(StrategyResult(st.name, cov.branch_ratio, cov.statement_ratio, cov.distinct_paths,
                                  sum(c.verdict in FINDINGS for c in results), elapsed))
    return out


def format_comparison(rows: list[StrategyResult]) -> str:
    lines = [f"{'Strategy':<20} {'Branches':>9} {'Stmts':>9} {'Paths':>6} {'Findings':>9} {'Seconds':>8}"]
    for r in rows:
        lines.append(f"{r.name:<20} {r.branches[0]:>4}/{r.branches[1]:<4} {r.statements[0]:>4}/{r.statements[1]:<4} "
                     f"{r.paths:>6} {r.findings:>9} {r.seconds:>8.2f}")
    return "\n".join(lines) + "\n"


# -- CLI ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="testforge", description="Generate and run tests for subject programs.")
    ap.add_argument("mode", choices=(*MODES, "compare"))
    ap.add_argument("--src", nargs="+", default=None, help="subject sources (.mini) and grammars (.bnf)")
    ap.add_argument("--fn", help="function under test")
    ap.add_argument("--pred", help="repOK predicate (korat mode)")
    ap.add_argument("--config", help="INI config file with per-mode sections")
    ap.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    ap.add_argument("--budget", type=int,
                    help="main budget: solver queries, trials, grammar depth or sequence length")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--format", action="append", choices=FORMATS,
                    help="table format, repeatable (default: all)")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(mode=ns.mode)
    if ns.config:
        try:
            text = Path(ns.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {ns.config}: {e.strerror}") from None
        cfg = load_config(text, cfg, ns.config)
        cfg.mode = ns.mode
    if ns.src:
        cfg.sources = ns.src
    for attr, val in (("function", ns.fn), ("pred", ns.pred), ("seed", ns.seed),
                      ("budget", ns.budget), ("out", ns.out)):
        if val is not None:
            setattr(cfg, attr, val)
    if ns.format:
        cfg.formats = tuple(dict.fromkeys(ns.format))
    return cfg


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        cfg = config_from_args(ns)
        if ns.mode == "compare":
            return _main_compare(cfg)
    except ConfigError as e:
        print(f"testforge: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


def _main_compare(cfg: RunConfig) -> int:
    if not cfg.function:
        raise ConfigError("compare needs --fn")
    cfg.mode = "explore"
    cfg.validate()
    p = _program_with(_load_programs(cfg), cfg.function)
    strategies = [
        Strategy("concolic", "concolic", cfg.domains, cfg.budget or cfg.max_queries),
        Strategy("random-int32", "random", {}, cfg.trials, cfg.seed),
    ]
    if cfg.domains:
        strategies.append(Strategy("random-domains", "random", cfg.domains, cfg.trials, cfg.seed))
    print(format_comparison(compare_strategies(p, cfg.function, strategies, cfg.step_budget)), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
