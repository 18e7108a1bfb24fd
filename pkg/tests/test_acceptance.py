"""One test per acceptance criterion, each printing a single PASS/FAIL line."""

from modsess.dsl import parse_partition
from modsess.fixtures import load, session
from modsess.globaltypes import NoTransition, gt_equal, gt_step
from modsess.lts import check_lock_free, enabled_labels, reachable_graph, run_trace, step
from modsess.modular import check_modularisation, minimal_partition, modularisation, refines
from modsess.syntax import EMPTY, Label, parse_trace
from modsess.typesystem import (
    EMPTY_COHERENT_SET,
    PLAYS_MISMATCH,
    check_output_viability,
    check_safety,
    check_typing,
    infer_type,
)
from modsess.verification import run_all

import oracles


def verdict(number, checks):
    failed = [name for name, ok in checks if not ok]
    line = f"criterion {number}: {'FAIL' if failed else 'PASS'}"
    print(line + (f" ({', '.join(failed)})" if failed else ""))
    assert not failed, line


def election_branch():
    # The hidden rest of the session has to elect in modules 1 and 2 first.
    local = [f"a{i}-leader->e{i}; d{i}-leader->c{i}; c{i}-leader->e{i}; e{i}-elect->s{i}" for i in (3, 1, 2)]
    tail = "w1-leader->w3; w3-gleader->gs; gs-gleader->s3; gs-no->s1; gs-no->s2; gs-del->w2; s3-gleader->e3; s3-del->b3"
    return parse_trace("; ".join(local + [tail]))


def test_criterion_1_leader_election():
    m = session("election", "E")
    first = {Label("a", "leader", "e"), Label("b", "leader", "a"), Label("c", "leader", "b"),
            Label("d", "leader", "c"), Label("e", "leader", "d")}
    trace = parse_trace("a-leader->e · d-leader->c · c-leader->e · e-elect->s · s-del->b")
    verdict(1, [
        ("initial labels", enabled_labels(m) == first),
        ("trace ends empty", run_trace(m, trace) == EMPTY),
        ("lock free", check_lock_free(m).verdict),
        ("typable", infer_type(m, frozenset({frozenset(m.participants)})).typable),
    ])


def test_criterion_2_modular_election():
    spec = load("modular_election")
    m, part = spec.session("Egl"), spec.partition("modules")
    v = infer_type(m, part)
    stepwise = v.typable
    s, g = m, v.type
    for lab in election_branch() if v.typable else ():
        if lab not in enabled_labels(s):
            stepwise = False
            break
        s, g = step(s, lab), gt_step(g, lab)
        stepwise = stepwise and check_typing(g, s, part)
    verdict(2, [
        ("modularisation", check_modularisation(m, part) == []),
        ("connectors", {p for mod in modularisation(m, part) for p in mod.connectors} == {"s1", "s2", "s3", "gs"}),
        ("typable", v.typable),
        ("subject reduction along the branch", stepwise),
    ])


def test_criterion_3_derived_type():
    spec = load("connectors")
    m = spec.session("MCONN")
    v = infer_type(m, parse_partition("{{u, p, q}, {v, r, s}}"))
    verdict(3, [("typable", v.typable), ("bisimilar to G", v.typable and gt_equal(v.type, spec.global_type("G")))])


def test_criterion_4_negative_fixtures():
    neg, comp = load("negatives"), load("composition")
    single = infer_type(neg.session("MSINGLE"), neg.partition("single"))
    m0 = neg.session("M0")
    lock = check_lock_free(m0)
    mrec = infer_type(neg.session("MREC"), neg.partition("singletons"))
    mpai = comp.session("MPAI")
    mpai2 = comp.session("MPAI2")
    verdict(4, [
        ("MSINGLE", not single.typable and single.reason == EMPTY_COHERENT_SET),
        ("M0 untypable", not infer_type(m0, "minimal").typable),
        ("M0 locked on r", not lock.verdict and lock.participant == "r"),
        ("MREC plays", not mrec.typable and mrec.reason == PLAYS_MISMATCH),
        ("MPAI untypable", not infer_type(mpai, comp.partition("halves")).typable),
        ("MPAI deadlocked", enabled_labels(mpai) == frozenset() and mpai != EMPTY),
        ("MPAI2 untypable", not infer_type(mpai2, comp.partition("rings")).typable),
        ("MPAI2 gets stuck", comp.session("STUCK") in reachable_graph(mpai2).states),
    ])


def test_criterion_5_global_type_lts():
    spec = load("interleaving")
    after = gt_step(spec.global_type("G"), Label("p", "l", "q"))
    try:
        gt_step(spec.global_type("Grej"), Label("p", "l", "q"))
        rejected = False
    except NoTransition:
        rejected = True
    verdict(5, [("interleaved step", gt_equal(after, spec.global_type("Gp"))), ("no transition", rejected)])


FIXTURES = [
    ("election", "E"),
    ("connectors", "MCONN"),
    ("connectors", "MAWIT"),
    ("negatives", "MSINGLE"),
    ("negatives", "M0"),
    ("negatives", "MREC"),
    ("negatives", "MREC2"),
    ("composition", "MPAI"),
    ("composition", "STUCK"),
    ("sequencing", "MSEQ"),
    ("conditions", "UNSAFE"),
    ("conditions", "UNVIABLE"),
    ("conditions", "PAIR"),
]


def test_criterion_6_minimal_partition():
    m = session("sequencing", "MSEQ")
    checks = [
        ("MSEQ before", minimal_partition(m) == parse_partition("{{p, q, r}}")),
        ("MSEQ after", minimal_partition(step(m, Label("r", "l'", "p"))) == parse_partition("{{p}, {q}}")),
    ]
    for file, name in FIXTURES:
        s = session(file, name)
        assert len(s.participants) <= 6
        least = minimal_partition(s)
        found = [oracles.freeze(p) for p in oracles.set_partitions(sorted(s.participants))]
        checks.append((name, all(refines(least, p) for p in found if oracles.modularisable(s, p))))
    verdict(6, checks)


# Each fixture with the partition it is meant to be read under.
META = [
    ("election", "E", "coarse"),
    ("modular_election", "Egl", "modules"),
    ("connectors", "MCONN", "modules"),
    ("connectors", "MAWIT", "modules"),
    ("negatives", "MSINGLE", "single"),
    ("negatives", "M0", None),
    ("negatives", "MREC", "singletons"),
    ("negatives", "MREC2", "pairs"),
    ("composition", "MPAI", "halves"),
    ("composition", "MPAI2", "rings"),
    ("composition", "STUCK", None),
    ("sequencing", "MSEQ", None),
    ("conditions", "UNSAFE", None),
    ("conditions", "UNVIABLE", None),
    ("conditions", "PAIR", None),
]


def test_criterion_7_metatheory():
    checks = []
    for file, name, part in META:
        spec = load(file)
        reports = run_all(spec.session(name), spec.partition(part) if part else "minimal", subject=name)
        for r in reports:
            if not r or r.mode != "exhaustive":
                print(r)
            checks.append((f"{name} {r.theorem}", r.passed and r.mode == "exhaustive"))
    verdict(7, checks)


def test_criterion_8_conditions():
    verdict(8, [
        ("E safe", check_safety(session("election", "E")).verdict),
        ("MSINGLE rejected", not check_output_viability(session("negatives", "MSINGLE")).verdict),
        ("MSINGLE with receiver rejected", not check_output_viability(session("conditions", "UNVIABLE")).verdict),
        ("E rejected", not check_output_viability(session("election", "E")).verdict),
    ])
