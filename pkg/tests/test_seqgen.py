from __future__ import annotations

import pytest

from oracles import list_invariants, list_sequences, parse_dot
from testforge import corpus
from testforge.heapgen import Structure, canonical_form
from testforge.seqgen import (
    INVARIANT_VIOLATION,
    ApiError,
    ApiSpec,
    Operation,
    explore_sequences,
    graph_to_dot,
    replay_sequence,
)
from testforge.subjectlang import Heap, eval_call, load
from testforge.testcase import BOUND_EXCEEDED, PASS

LL = corpus.program("linkedlist")
API = ApiSpec("LinkedList", "repOK", (Operation("add", ((0, 9),)), Operation("removeFirst")))
BUGGY = ApiSpec("LinkedList", "repOK", (Operation("addNoPrev", ((0, 9),)), Operation("removeFirst")))


def labels(seq) -> tuple[str, ...]:
    return tuple(f"{op}({', '.join(map(str, args))})" for op, args in seq.calls)


def run_calls(api, calls):
    heap = Heap()
    root = heap.alloc("LinkedList", {"Head": None, "Tail": None, "size": 0})
    for op, args in calls:
        heap = eval_call(LL, op, [root, *args], heap).heap
    return heap, root


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_sequences_match_hand_oracle(n):
    _, seqs = explore_sequences(LL, API, n)
    assert {labels(s) for s in seqs} == list_sequences(n)
    assert all(s.verdict == PASS for s in seqs)


def test_length_two_examples():
    _, seqs = explore_sequences(LL, API, 2)
    got = {labels(s) for s in seqs}
    assert ("removeFirst()",) not in got
    assert {("add(0)",), ("add(0)", "add(0)"), ("add(0)", "removeFirst()")} <= got


def test_zero_length_is_initial_node_only():
    g, seqs = explore_sequences(LL, API, 0)
    assert len(g.nodes) == 1 and g.edges == [] and len(seqs) == 1
    nodes, edges = parse_dot(graph_to_dot(g))
    assert len(nodes) == 1 and edges == []


def test_states_deduplicated_by_shape():
    g, seqs = explore_sequences(LL, API, 3)
    assert len(g.nodes) == len(set(g.nodes)) == 4  # sizes 0..3
    # add then removeFirst returns to the initial state
    back = next(s for s in seqs if labels(s) == ("add(0)", "removeFirst()"))
    assert back.state == g.initial


def test_prev_link_bug_found_at_length_two():
    g, seqs = explore_sequences(LL, BUGGY, 3)
    bad = [s for s in seqs if s.verdict == INVARIANT_VIOLATION]
    assert bad
    shortest = min(bad, key=lambda s: len(s.calls))
    assert len(shortest.calls) == 2
    heap, root = run_calls(BUGGY, shortest.calls)
    assert "eq5" in list_invariants(heap, root)
    assert all(s.state in g.failing for s in bad)


def test_failing_sequences_not_extended():
    _, seqs = explore_sequences(LL, BUGGY, 4)
    bad = {s.calls for s in seqs if s.verdict != PASS}
    for s in seqs:
        assert not any(s.calls[:k] in bad for k in range(len(s.calls)))


@pytest.mark.parametrize("api", [API, BUGGY])
def test_prefix_closure(api):
    _, seqs = explore_sequences(LL, api, 3)
    ok = {s.calls for s in seqs if s.verdict == PASS}
    for calls in ok:
        for k in range(len(calls)):
            assert calls[:k] in ok


def test_replay_reaches_recorded_state():
    g, seqs = explore_sequences(LL, API, 3, arg_budget=2)
    for s in seqs:
        assert replay_sequence(LL, API, s.calls) == g.nodes[s.state]
        heap, root = run_calls(API, s.calls)
        assert canonical_form(Structure(heap, root)) == g.nodes[s.state]


def test_edges_respect_execution():
    g, seqs = explore_sequences(LL, API, 2, arg_budget=2)
    ops = {op.name for op in API.operations}
    for src, label, dst in g.edges:
        assert label.split("(")[0] in ops
    for s in seqs[1:]:
        parent = next(p for p in seqs if p.calls == s.calls[:-1])
        op, args = s.calls[-1]
        assert any(e == (parent.state, f"{op}({', '.join(map(str, args))})", s.state) for e in g.edges)


def test_arg_budget_draws_boundary_then_random():
    _, seqs = explore_sequences(LL, API, 1, arg_budget=3, seed=5)
    args = [s.calls[0][1][0] for s in seqs if s.calls]
    assert args[:2] == [0, 1] and len(set(args)) == 3 and all(0 <= a <= 9 for a in args)


def test_dot_rendering():
    g, _ = explore_sequences(LL, BUGGY, 2)
    text = graph_to_dot(g)
    nodes, edges = parse_dot(text)
    assert len(nodes) == len(g.nodes) and len(edges) == len(g.edges)
    assert text.count("peripheries=2") == len(g.failing) > 0
    assert graph_to_dot(explore_sequences(LL, BUGGY, 2)[0]) == text


def test_step_budget_flags_bound_exceeded():
    p = load(corpus.source("linkedlist.mini") + "\nvoid spin(LinkedList l) { while (true) { } }")
    api = ApiSpec("LinkedList", "repOK", (Operation("spin"),))
    _, seqs = explore_sequences(p, api, 2, step_budget=500)
    assert [s.verdict for s in seqs] == [PASS, BOUND_EXCEEDED]


def test_init_function():
    p = load(corpus.source("linkedlist.mini") + """
    LinkedList one() { LinkedList l = new LinkedList; add(l, 7); return l; }""")
    api = ApiSpec("LinkedList", "repOK", (Operation("removeFirst"),), init="one")
    _, seqs = explore_sequences(p, api, 2)
    assert [labels(s) for s in seqs] == [(), ("removeFirst()",)]


@pytest.mark.parametrize("api,msg", [
    (ApiSpec("Nope", "repOK", ()), "unknown state"),
    (ApiSpec("LinkedList", "size", ()), "invariant"),
    (ApiSpec("LinkedList", "repOK", (Operation("nope"),)), "unknown function"),
    (ApiSpec("LinkedList", "repOK", (Operation("repOK"),)), None),
    (ApiSpec("LinkedList", "repOK", (Operation("add", ((0, 1), (0, 1))),)), "interval"),
])
def test_api_validation(api, msg):
    if msg is None:
        api.validate(LL)  # repOK is a legal (if pointless) operation
        return
    with pytest.raises(ApiError, match=msg):
        api.validate(LL)


def test_initial_state_must_satisfy_invariant():
    p = load(corpus.source("linkedlist.mini") + """
    LinkedList broken() { LinkedList l = new LinkedList; l.size = 3; return l; }""")
    with pytest.raises(ApiError):
        explore_sequences(p, ApiSpec("LinkedList", "repOK", (), init="broken"), 1)


def test_sequence_rendering():
    _, seqs = explore_sequences(LL, API, 2)
    assert seqs[0].render() == "<init>"
    assert "add(0); removeFirst()" in {s.render() for s in seqs}
