import json

import pytest
from hypothesis import given, settings

from modsess.dsl import (
    ParseError,
    Verdict,
    emit_verdict,
    export_dot,
    parse_global_type,
    parse_partition,
    parse_process,
    parse_spec,
    print_global_type,
    print_global_type_inline,
    print_partition,
    print_process,
    print_session,
    print_session_inline,
)
from modsess.fixtures import FILES, load
from modsess.lts import reachable_graph

import strategies as S


@pytest.mark.parametrize(
    "text, message",
    [
        ("session S = p |> q!l +", "line 1, column 23: expected a process, found 'end of input'"),
        ("def P = q!l\ndef P = q?l", "line 2, column 5: duplicate definition P"),
        ("session S = p |> X", "line 1, column 18: undefined name X"),
        ("partition A = {{p},{p}}", "line 1, column 21: participant p occurs in two blocks"),
        ("gdef G = p->p:l", "line 1, column 10: sender and receiver coincide in p->p"),
        ("def P = q!l + q!l", "line 1, column 5: duplicate output branch q!l"),
        ("session S = p |> q!l, p |> q?l", "line 1, column 9: duplicate participant p in session S"),
        ("foo", "line 1, column 1: expected a declaration, found 'foo'"),
        ("def X = Y\ndef Y = X", "line 1, column 5: unguarded recursion"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(ParseError) as err:
        parse_spec(text)
    assert str(err.value) == message


def test_comments_and_forward_names():
    spec = parse_spec("# leading\nsession S = p |> P, q |> Q  # trailing\ndef P = q!l.P\ndef Q = p?l.Q\n")
    assert spec.session("S").participants == ("p", "q")
    assert len(spec.processes) == 2


def test_unknown_names_raise_key_error():
    spec = parse_spec("def P = 0")
    with pytest.raises(KeyError, match="unknown session S"):
        spec.session("S")
    with pytest.raises(KeyError, match="unknown partition A"):
        spec.partition("A")
    with pytest.raises(KeyError, match="unknown global type G"):
        spec.global_type("G")


def test_empty_partition():
    assert parse_partition("{}") == frozenset()
    assert parse_partition("{{q, p}, {r}}") == frozenset({frozenset("pq"), frozenset("r")})


def test_printers():
    g = load("interleaving").global_type("G")
    assert print_global_type(g) == "gdef G = r->s:l1.G + r->s:l2.p->q:l"
    assert print_global_type_inline(g) == "rec X0.(r->s:l1.X0 + r->s:l2.p->q:l)"
    assert print_partition(load("connectors").partition("modules")) == "{{p, q, u}, {r, s, v}}"
    pair = load("conditions").session("PAIR")
    assert print_session_inline(pair) == "{p|>q!l, q|>p?l}"
    assert print_session(pair, "S") == "def S_p = q!l\ndef S_q = p?l\nsession S = p |> S_p, q |> S_q"


@pytest.mark.parametrize("name", FILES)
def test_corpus_round_trips(name):
    spec = load(name)
    for sname, m in spec.sessions.items():
        assert parse_spec(print_session(m, sname)).session(sname) == m
    for gname, g in spec.global_types.items():
        assert parse_global_type(gname, print_global_type(g, gname)) is g


@settings(max_examples=150, deadline=None)
@given(S.process_graphs("p"))
def test_process_round_trip(graph):
    P = graph.build()
    assert parse_process("P", print_process(P, "P")) is P


@settings(max_examples=150, deadline=None)
@given(S.global_types())
def test_global_type_round_trip(g):
    assert parse_global_type("G", print_global_type(g, "G")) is g


def test_dot_for_type_and_graph():
    assert export_dot(load("interleaving").global_type("Gp"), "Gp") == (
        'digraph "Gp" {\n'
        '  n0 [label="n0"];\n'
        '  n1 [label="End"];\n'
        '  n0 -> n0 [label="r-l1->s"];\n'
        '  n0 -> n1 [label="r-l2->s"];\n'
        "}\n"
    )
    dot = export_dot(reachable_graph(load("conditions").session("PAIR")), "PAIR")
    assert 's1 [shape=doublecircle, label="empty"];' in dot
    assert 's0 -> s1 [label="p-l->q"];' in dot
    with pytest.raises(TypeError):
        export_dot(42)


def test_verdict_formats():
    v = Verdict("lockfree", "M0", "locked", {"states": 4}, {"trace": "p-l->q", "participant": "r"})
    assert not v.positive
    assert emit_verdict(v) == (
        "lockfree M0: locked\n  states: 4\n  counterexample.participant: r\n  counterexample.trace: p-l->q"
    )
    rec = json.loads(emit_verdict(v, "machine"))
    assert rec == {
        "command": "lockfree",
        "subject": "M0",
        "result": "locked",
        "detail": {"states": 4},
        "counterexample": {"participant": "r", "trace": "p-l->q"},
    }
    with pytest.raises(ValueError):
        Verdict("lockfree", "M0", "locked")
    with pytest.raises(ValueError):
        emit_verdict(v, "xml")
