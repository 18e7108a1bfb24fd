"""Executable metatheory: subject reduction, fidelity, lock freedom and lemmas.

Every check explores a finite graph breadth first and stops at the first
counterexample, which carries the trace from the initial session so that
``run_trace`` reproduces the failing state.  When a graph is larger than the
state budget the check falls back to bounded random walks and says so in the
report.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable

from ._gc import gc_paused
from .globaltypes import GlobalType, NoTransition, capabilities, gt_enabled, gt_step, node_plays, plays_global
from .lts import (
    DEFAULT_STATE_BUDGET,
    BudgetExceeded,
    SessionGraph,
    check_lock_free,
    enabled_labels,
    find_redex,
    reachable_graph,
    sorted_labels,
    step,
)
from .modular import Partition, check_modularisation, sorted_blocks
from .syntax import Label, Participant, Session, Trace, format_trace, inp, out, plays_session
from .typesystem import (
    NotModularisable,
    PartitionChoice,
    _local_failure,
    coherent_sets,
    infer_type,
    resolve_partition,
)

SAMPLE_WALKS = 200
SAMPLE_DEPTH = 200


@dataclass(frozen=True)
class MetaReport:
    theorem: str
    subject: str
    states: int
    edges: int
    passed: bool
    trace: Trace | None = None
    state: Session | None = None
    label: Label | None = None
    explanation: str = ""
    mode: str = "exhaustive"

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        head = f"{self.theorem} [{self.subject}] {'pass' if self.passed else 'FAIL'}"
        head += f" ({self.states} states, {self.edges} edges, {self.mode})"
        if self.passed:
            return head
        where = format_trace(self.trace or ())
        lab = f" on {self.label}" if self.label is not None else ""
        return f"{head}: after {where}{lab}: {self.explanation}"


class PreconditionError(ValueError):
    """The session handed to a theorem check does not satisfy its hypothesis."""


class _Fail(Exception):
    def __init__(self, label: Label | None, explanation: str):
        self.label = label
        self.explanation = explanation


Expand = Callable[[Hashable], Iterable[tuple[Label, Hashable]]]


@gc_paused
def _explore(
    theorem: str,
    subject: str,
    root: Hashable,
    expand: Expand,
    state_of: Callable[[Hashable], Session],
    budget: int | None,
    sample: bool,
    seed: int = 0,
) -> MetaReport:
    """Breadth-first search; ``expand`` raises :class:`_Fail` to report a defect."""
    limit = DEFAULT_STATE_BUDGET if budget is None else budget
    parent: dict[Hashable, tuple[Hashable, Label] | None] = {root: None}
    todo = deque([root])
    edges = 0

    def trace(node) -> Trace:
        path = []
        while parent[node] is not None:
            node, lab = parent[node]
            path.append(lab)
        return tuple(reversed(path))

    while todo:
        node = todo.popleft()
        try:
            for lab, nxt in expand(node):
                edges += 1
                if nxt not in parent:
                    if len(parent) >= limit:
                        if not sample:
                            raise BudgetExceeded(f"more than {limit} states while checking {theorem}")
                        return _walks(theorem, subject, root, expand, state_of, seed)
                    parent[nxt] = (node, lab)
                    todo.append(nxt)
        except _Fail as f:
            return MetaReport(theorem, subject, len(parent), edges, False, trace(node), state_of(node), f.label,
                              f.explanation)
    return MetaReport(theorem, subject, len(parent), edges, True)


def _walks(theorem, subject, root, expand, state_of, seed) -> MetaReport:
    rng = random.Random(seed)
    seen = {root}
    edges = 0
    for _ in range(SAMPLE_WALKS):
        node, path = root, []
        for _ in range(SAMPLE_DEPTH):
            try:
                succ = list(expand(node))
            except _Fail as f:
                return MetaReport(theorem, subject, len(seen), edges, False, tuple(path), state_of(node), f.label,
                                  f.explanation, mode="sampled")
            edges += len(succ)
            if not succ:
                break
            lab, node = rng.choice(succ)
            path.append(lab)
            seen.add(node)
    return MetaReport(theorem, subject, len(seen), edges, True, mode="sampled")


def _typed_start(m: Session, part: Partition, g: GlobalType | None, theorem: str) -> GlobalType:
    if g is not None:
        return g
    v = infer_type(m, part)
    if not v.typable:
        raise PreconditionError(f"{theorem} needs a typable session: {v.reason}")
    return v.type


class _Typing:
    """Local premises of the typing rule with per-state coherent sets cached."""

    def __init__(self, part: Partition):
        self.part = part
        self.cache: dict = {}

    def failure(self, g: GlobalType, s: Session) -> str | None:
        return _local_failure(g.row, plays_global(g), s, self.part, self.cache)


def check_subject_reduction(
    m: Session,
    part: PartitionChoice,
    g: GlobalType | None = None,
    *,
    subject: str = "",
    budget: int | None = None,
    sample: bool = True,
) -> MetaReport:
    """Every session step is matched by a type step whose target types the new state.

    The initial pair is taken on trust when ``g`` is supplied, which is how
    corrupted types are fed in as negative controls.
    """
    part = resolve_partition(m, part)
    g0 = _typed_start(m, part, g, "subject reduction")
    typing = _Typing(part)

    def expand(pair):
        s, t = pair
        out_ = []
        for lab in sorted_labels(s):
            try:
                t2 = gt_step(t, lab)
            except NoTransition as e:
                raise _Fail(lab, f"the type has no matching transition ({e})") from None
            s2 = step(s, lab)
            why = typing.failure(t2, s2)
            if why is not None:
                raise _Fail(lab, f"the stepped type does not type the new state: {why}")
            out_.append((lab, (s2, t2)))
        return out_

    return _explore("subject reduction", subject, (m, g0), expand, lambda p: p[0], budget, sample)


def type_enabled(g: GlobalType) -> list[Label]:
    """Labels with a transition out of ``g``, in sorted order."""
    return sorted(gt_enabled(g))


def check_session_fidelity(
    m: Session,
    part: PartitionChoice,
    g: GlobalType | None = None,
    *,
    subject: str = "",
    budget: int | None = None,
    sample: bool = True,
) -> MetaReport:
    """Every type step is matched by a session step and the pair still types."""
    part = resolve_partition(m, part)
    g0 = _typed_start(m, part, g, "session fidelity")
    typing = _Typing(part)

    def expand(pair):
        s, t = pair
        enabled = enabled_labels(s)
        out_ = []
        for lab in type_enabled(t):
            if lab not in enabled:
                raise _Fail(lab, "the type offers a communication the session cannot perform")
            s2, t2 = step(s, lab), gt_step(t, lab)
            why = typing.failure(t2, s2)
            if why is not None:
                raise _Fail(lab, f"the stepped pair is not typed: {why}")
            out_.append((lab, (s2, t2)))
        return out_

    return _explore("session fidelity", subject, (m, g0), expand, lambda p: p[0], budget, sample)


def check_lockfree_soundness(
    m: Session, part: PartitionChoice, *, subject: str = "", budget: int | None = None
) -> MetaReport:
    """Typable sessions must be lock free; untypable ones pass vacuously."""
    part = resolve_partition(m, part)
    v = infer_type(m, part, budget=budget)
    graph = reachable_graph(m, budget)
    lock = check_lock_free(graph)
    n, e = len(graph.states), len(graph.edges)
    note = f"typable={v.typable} lock_free={lock.verdict}"
    if v.typable and not lock.verdict:
        return MetaReport("lock freedom", subject, n, e, False, lock.trace, lock.state, None,
                          f"typable but {lock.participant} is locked; {note}")
    return MetaReport("lock freedom", subject, n, e, True, explanation=note)


def check_participant_progress(g: GlobalType, *, subject: str = "") -> MetaReport:
    """From every node each participant is reached by top-level steps that avoid it."""
    rows = g.nodes
    gplays = node_plays(g)
    preds: list[list[tuple[int, Label]]] = [[] for _ in rows]
    edges = 0
    for i, row in enumerate(rows):
        for lab, j in row:
            preds[j].append((i, lab))
            edges += 1
    ptps = sorted(set().union(*gplays)) if rows else []
    for p in ptps:
        good = {i for i, row in enumerate(rows) if any(p in lab.participants for lab, _ in row)}
        todo = deque(good)
        while todo:
            j = todo.popleft()
            for i, lab in preds[j]:
                if i not in good and p not in lab.participants:
                    good.add(i)
                    todo.append(i)
        for i in range(len(rows)):
            if p in gplays[i] and i not in good:
                return MetaReport("participant progress", subject, len(rows), edges, False, _node_trace(g, i),
                                  None, None, f"{p} occurs below this node but no avoiding path reaches it")
    return MetaReport("participant progress", subject, len(rows), edges, True)


def _node_trace(g: GlobalType, target: int) -> Trace:
    parent: dict[int, tuple[int, Label] | None] = {0: None}
    todo = deque([0])
    while todo:
        i = todo.popleft()
        for lab, j in g.nodes[i]:
            if j not in parent:
                parent[j] = (i, lab)
                todo.append(j)
    path = []
    while parent[target] is not None:
        target, lab = parent[target]
        path.append(lab)
    return tuple(reversed(path))


# Lemmas over the session graph.


@gc_paused
def _graph_report(theorem: str, subject: str, graph: SessionGraph, check) -> MetaReport:
    for i, s in enumerate(graph.states):
        for lab, j in graph.successors(i):
            why = check(s, lab, graph.states[j])
            if why is not None:
                return MetaReport(theorem, subject, len(graph.states), len(graph.edges), False, graph.trace_to(i), s,
                                  lab, why)
    return MetaReport(theorem, subject, len(graph.states), len(graph.edges), True)


def _graph(m: Session | SessionGraph, budget: int | None) -> SessionGraph:
    return m if isinstance(m, SessionGraph) else reachable_graph(m, budget)


def check_unique_redex(m: Session | SessionGraph, *, subject: str = "", budget: int | None = None) -> MetaReport:
    """Each transition has exactly one redex and leaves everyone else untouched."""

    def check(s: Session, lab: Label, t: Session) -> str | None:
        p, msg, q = lab
        senders = [c for k, c in s[p].row if k == out(q, msg)]
        receivers = [c for k, c in s[q].row if k == inp(p, msg)]
        if len(senders) != 1 or len(receivers) != 1:
            return f"{len(senders)} sending and {len(receivers)} receiving branches match"
        r = find_redex(s, lab)
        if (r.sender_branch[1].id, r.receiver_branch[1].id) != (senders[0], receivers[0]):
            return "the redex is not the matching pair of branches"
        if t[p] is not r.sender_branch[1] or t[q] is not r.receiver_branch[1]:
            return "the partners do not continue with the redex continuations"
        rest = [e for e in t if e[0] not in (p, q)]
        if rest != list(r.residual):
            return "a participant outside the redex changed"
        return None

    return _graph_report("unique redex", subject, _graph(m, budget), check)


def check_plays_conservation(
    m: Session | SessionGraph, *, subject: str = "", budget: int | None = None
) -> MetaReport:
    """``plays(M) = plays(label) ∪ plays(M')`` along every transition."""

    def check(s: Session, lab: Label, t: Session) -> str | None:
        before, after = plays_session(s), lab.participants | plays_session(t)
        if before != after:
            return f"participants {sorted(before)} became {sorted(after)}"
        return None

    return _graph_report("plays conservation", subject, _graph(m, budget), check)


@gc_paused
def check_label_independence(
    m: Session | SessionGraph, part: PartitionChoice, *, subject: str = "", budget: int | None = None
) -> MetaReport:
    """An enabled label outside a coherent set shares no participant with it."""
    graph = _graph(m, budget)
    part = resolve_partition(graph.root, part)
    edges = 0
    for i, s in enumerate(graph.states):
        if s.is_empty:
            continue
        try:
            sets = coherent_sets(s, part)
        except NotModularisable as e:
            return MetaReport("label independence", subject, len(graph.states), edges, False, graph.trace_to(i), s,
                              None, f"state is not modularisable: {e}")
        enabled = sorted(enabled_labels(s))
        for b, labs in sets.items():
            for lab in enabled:
                if lab in labs:
                    continue
                edges += 1
                clash = next((k for k in sorted(labs) if k.participants & lab.participants), None)
                if clash is not None:
                    return MetaReport("label independence", subject, len(graph.states), edges, False,
                                      graph.trace_to(i), s, lab, f"shares a participant with {clash} of {sorted(b)}")
    return MetaReport("label independence", subject, len(graph.states), edges, True)


def check_coherence_preservation(
    m: Session | SessionGraph, part: PartitionChoice, *, subject: str = "", budget: int | None = None
) -> MetaReport:
    """A nonempty coherent set survives any transition whose label lies outside it."""
    graph = _graph(m, budget)
    part = resolve_partition(graph.root, part)
    cache: dict[Session, dict] = {}

    def sets_of(s: Session) -> dict:
        got = cache.get(s)
        if got is None:
            got = cache[s] = coherent_sets(s, part) if not s.is_empty else {}
        return got

    def check(s: Session, lab: Label, t: Session) -> str | None:
        try:
            before, after = sets_of(s), sets_of(t)
        except NotModularisable as e:
            return f"not modularisable: {e}"
        for b, labs in before.items():
            if labs and lab not in labs and after.get(b) != labs:
                return f"coherent set of {sorted(b)} changed from {sorted(map(str, labs))}"
        return None

    return _graph_report("coherence preservation", subject, graph, check)


@gc_paused
def check_modularity_preservation(
    m: Session | SessionGraph, part: PartitionChoice, *, subject: str = "", budget: int | None = None
) -> MetaReport:
    """Every state reachable from a modularisable session is modularisable."""
    graph = _graph(m, budget)
    part = resolve_partition(graph.root, part)
    if check_modularisation(graph.root, part):
        raise PreconditionError("the initial session is not modularisable under this partition")
    for i, s in enumerate(graph.states):
        bad = check_modularisation(s, part)
        if bad:
            return MetaReport("modularity preservation", subject, len(graph.states), len(graph.edges), False,
                              graph.trace_to(i), s, None, str(bad[0]))
    return MetaReport("modularity preservation", subject, len(graph.states), len(graph.edges), True)


# Lemmas over (state, type) pairs.


def check_type_plays(
    m: Session, part: PartitionChoice, g: GlobalType | None = None, *, subject: str = "",
    budget: int | None = None, sample: bool = True,
) -> MetaReport:
    """Along every reachable pair the type and the session have the same participants."""
    part = resolve_partition(m, part)
    g0 = _typed_start(m, part, g, "type participants")

    def expand(pair):
        s, t = pair
        if plays_global(t) != plays_session(s):
            raise _Fail(None, f"type participants {sorted(plays_global(t))} differ from {sorted(plays_session(s))}")
        return [(lab, (step(s, lab), gt_step(t, lab))) for lab in sorted_labels(s)]

    return _explore("type participants", subject, (m, g0), expand, lambda p: p[0], budget, sample)


def check_capability_membership(
    m: Session, part: PartitionChoice, g: GlobalType | None = None, *, subject: str = "",
    budget: int | None = None, sample: bool = True,
) -> MetaReport:
    """Every label fired along the pair exploration is a capability of its source type.

    Candidates at each pair are the session's enabled labels together with
    every label the type can fire on its own.
    """
    part = resolve_partition(m, part)
    g0 = _typed_start(m, part, g, "capability membership")
    seen_types: set[int] = set()

    def expand(pair):
        s, t = pair
        if t.id not in seen_types:
            seen_types.add(t.id)
            cp = capabilities(t)
            for lab in type_enabled(t):
                if lab not in cp:
                    raise _Fail(lab, "fires without being a capability")
        succ = []
        for lab in sorted_labels(s):
            t2 = gt_step(t, lab)
            if lab not in capabilities(t):
                raise _Fail(lab, "fires without being a capability")
            succ.append((lab, (step(s, lab), t2)))
        return succ

    return _explore("capability membership", subject, (m, g0), expand, lambda p: p[0], budget, sample)


def check_coherent_prefix(
    m: Session, part: PartitionChoice, g: GlobalType | None = None, *, subject: str = "",
    budget: int | None = None, sample: bool = True,
) -> MetaReport:
    """Any coherent set can head a type, at every reachable state.

    Continuations are the types the pair exploration reaches for the
    successor states, so the only new obligation is the root rule.
    """
    part = resolve_partition(m, part)
    g0 = _typed_start(m, part, g, "coherent prefix")
    found: dict[Session, GlobalType] = {}
    pairs = []

    def expand(pair):
        s, t = pair
        found.setdefault(s, t)
        pairs.append(s)
        return [(lab, (step(s, lab), gt_step(t, lab))) for lab in sorted_labels(s)]

    walk = _explore("coherent prefix", subject, (m, g0), expand, lambda p: p[0], budget, sample)
    if not walk.passed or walk.mode != "exhaustive":
        return walk
    checked = 0
    done: set[Session] = set()
    for s in pairs:
        if s in done or s.is_empty:
            continue
        done.add(s)
        ptps = plays_session(s)
        for b, labs in coherent_sets(s, part).items():
            if not labs:
                continue
            checked += 1
            # The head is coherent by construction; the rule also needs the participants to agree.
            got = frozenset().union(*(lab.participants | plays_global(found[step(s, lab)]) for lab in labs))
            if got != ptps:
                graph = reachable_graph(m, budget)
                return MetaReport("coherent prefix", subject, walk.states, checked, False,
                                  graph.trace_to(graph.index[s]), s, None,
                                  f"block {sorted(b)}: the prefixed type misses {sorted(ptps - got)}")
    return MetaReport("coherent prefix", subject, walk.states, checked, True)


def check_forced_roots(m: Session, part: PartitionChoice, *, subject: str = "", budget: int | None = None) -> MetaReport:
    """Inference succeeds with every nonempty coherent set forced at the root, or with none."""
    part = resolve_partition(m, part)
    base = infer_type(m, part, budget=budget)
    if m.is_empty or check_modularisation(m, part):
        return MetaReport("forced roots", subject, 1, 0, True, explanation="no coherent sets to force")
    tried = 0
    for b, labs in coherent_sets(m, part).items():
        if not labs:
            continue
        tried += 1
        v = infer_type(m, part, root_block=b, budget=budget)
        if v.typable != base.typable:
            return MetaReport("forced roots", subject, 1, tried, False, (), m, None,
                              f"root block {sorted(b)} gives typable={v.typable}, default gives {base.typable}")
    return MetaReport("forced roots", subject, 1, tried, True)


def coarsenings(part: Partition) -> list[Partition]:
    """All partitions obtained by merging blocks of ``part``, ``part`` included."""
    blocks = sorted_blocks(part)
    out_: list[Partition] = []

    def go(k: int, acc: list[frozenset]):
        if k == len(blocks):
            out_.append(frozenset(acc))
            return
        b = blocks[k]
        for i in range(len(acc)):
            go(k + 1, acc[:i] + [acc[i] | b] + acc[i + 1:])
        go(k + 1, acc + [b])

    go(0, [])
    return out_


def check_partition_independence(
    m: Session,
    part: PartitionChoice,
    partitions: Iterable[Partition] | None = None,
    *,
    subject: str = "",
    budget: int | None = None,
) -> MetaReport:
    """Typability agrees across every modularising partition tried.

    By default the candidates are the coarsenings of ``part``.
    """
    part = resolve_partition(m, part)
    base = infer_type(m, part, budget=budget)
    # Both directions apply once the base partition modularises the session.
    symmetric = not check_modularisation(m, part)
    candidates = coarsenings(part) if partitions is None else list(partitions)
    tried = 0
    for other in sorted(candidates, key=lambda p: sorted(sorted(b) for b in p)):
        if check_modularisation(m, other):
            continue
        tried += 1
        v = infer_type(m, other, budget=budget)
        blocks = [sorted(b) for b in sorted_blocks(other)]
        if base.typable and not v.typable:
            return MetaReport("partition independence", subject, tried, 0, False, v.trace, v.state, None,
                              f"untypable under {blocks}: {v.reason}")
        if symmetric and v.typable and not base.typable:
            return MetaReport("partition independence", subject, tried, 0, False, base.trace, base.state, None,
                              f"typable under {blocks} only: {base.reason}")
    return MetaReport("partition independence", subject, tried, 0, True)


def run_all(
    m: Session, part: PartitionChoice, *, subject: str = "", budget: int | None = None
) -> list[MetaReport]:
    """Every check that applies to ``m``.

    Module lemmas need a modularisable root and pair checks a typable one.
    """
    part = resolve_partition(m, part)
    graph = reachable_graph(m, budget)
    reports = [
        check_unique_redex(graph, subject=subject),
        check_plays_conservation(graph, subject=subject),
        check_lockfree_soundness(m, part, subject=subject, budget=budget),
    ]
    if check_modularisation(m, part):
        return reports
    reports += [
        check_modularity_preservation(graph, part, subject=subject),
        check_label_independence(graph, part, subject=subject),
        check_coherence_preservation(graph, part, subject=subject),
        check_forced_roots(m, part, subject=subject, budget=budget),
        check_partition_independence(m, part, subject=subject, budget=budget),
    ]
    v = infer_type(m, part, budget=budget)
    if not v.typable:
        return reports
    g = v.type
    reports += [
        check_subject_reduction(m, part, g, subject=subject, budget=budget),
        check_session_fidelity(m, part, g, subject=subject, budget=budget),
        check_type_plays(m, part, g, subject=subject, budget=budget),
        check_capability_membership(m, part, g, subject=subject, budget=budget),
        check_participant_progress(g, subject=subject),
        check_coherent_prefix(m, part, g, subject=subject, budget=budget),
    ]
    return reports
