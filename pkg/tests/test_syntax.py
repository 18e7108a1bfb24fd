import pytest
from hypothesis import given, settings

from modsess.dsl import parse_process
from modsess.syntax import (
    EMPTY,
    NIL,
    ActionPrefix,
    Direction,
    Label,
    canonical_session,
    format_trace,
    inp,
    out,
    parse_trace,
    plays_session,
    plays_trace,
    prefix,
    psum,
)

import strategies as S


def test_label_parse_and_print():
    lab = Label.parse(" a-leader->e ")
    assert lab == Label("a", "leader", "e")
    assert str(lab) == "a-leader->e"
    assert lab.participants == {"a", "e"}


@pytest.mark.parametrize("text", ["a->b", "a-l-", "-l->b", "a-l->a", ""])
def test_label_parse_rejects(text):
    with pytest.raises(ValueError):
        Label.parse(text)


def test_trace_separators():
    t = parse_trace("a-leader->e · d-leader->c; c-leader->e")
    assert [str(x) for x in t] == ["a-leader->e", "d-leader->c", "c-leader->e"]
    assert format_trace(t) == "a-leader->e · d-leader->c · c-leader->e"
    assert format_trace(()) == "ε"
    assert plays_trace(t) == {"a", "c", "d", "e"}


def test_prefix_text():
    assert str(out("q", "l")) == "q!l"
    assert str(inp("q", "l")) == "q?l"
    assert ActionPrefix("q", Direction.INPUT, "l") == inp("q", "l")


def test_sum_order_is_irrelevant():
    a = psum((out("q", "l"), NIL), (inp("r", "m"), NIL))
    b = psum((inp("r", "m"), NIL), (out("q", "l"), NIL))
    assert a is b
    assert a.partners == {"q", "r"}


def test_structural_congruence():
    P = prefix(out("q", "l"))
    Q = prefix(inp("p", "l"))
    m1 = canonical_session({"q": Q, "z": NIL, "p": P})
    m2 = canonical_session([("p", P), ("q", Q)])
    assert m1 == m2 and hash(m1) == hash(m2)
    assert m1.participants == ("p", "q")
    assert plays_session(m1) == {"p", "q"}
    assert m1["z"] is NIL
    assert canonical_session({"p": NIL}) == EMPTY
    assert EMPTY.is_empty


def test_duplicate_participant():
    with pytest.raises(ValueError, match="duplicate participant p"):
        canonical_session([("p", NIL), ("p", NIL)])


def test_advance_matches_replace():
    P = parse_process("q!l.r!m")
    Q = parse_process("p?l")
    R = parse_process("p?m")
    m = canonical_session({"p": P, "q": Q, "r": R})
    upd = {"p": P.branch(out("q", "l")), "q": NIL}
    assert m.advance(upd) == m.replace(upd)
    assert m.advance(upd).participants == ("p", "r")


def test_recursive_definition_is_finite():
    P = parse_process("X", "def X = q!l.Y\ndef Y = q!l.X")
    assert len(P) == 1
    assert P.branch(out("q", "l")) is P


@settings(max_examples=100, deadline=None)
@given(S.sessions())
def test_canonical_form_is_sorted_and_live(m):
    assert list(m.participants) == sorted(m.participants)
    assert all(not P.is_leaf for _, P in m)
    assert canonical_session(reversed(m.entries)) == m
