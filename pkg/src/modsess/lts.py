"""Synchronous session semantics, reachability and lock freedom."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

from ._gc import gc_paused
from .syntax import Label, Participant, Process, Session, Trace

DEFAULT_STATE_BUDGET = int(os.environ.get("MODSESS_STATE_BUDGET", 100_000))


class NoRedex(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


class TraceError(ValueError):
    def __init__(self, index: int, label: Label, state: Session):
        self.index = index
        self.label = label
        self.state = state
        super().__init__(f"label {index} ({label}) is not enabled")


@lru_cache(maxsize=1 << 18)
def enabled_labels(m: Session) -> frozenset[Label]:
    """All labels ``p λ q`` such that ``p`` offers ``q!λ`` and ``q`` offers ``p?λ``."""
    labels = []
    for p, P in m:
        outs, _ = P.io()
        for (q, msg) in outs:
            if (p, msg) in m[q].io()[1]:
                labels.append(Label(p, msg, q))
    return frozenset(labels)


def sorted_labels(m: Session) -> list[Label]:
    return sorted(enabled_labels(m))


class Redex(NamedTuple):
    sender_branch: tuple  # (prefix, continuation)
    receiver_branch: tuple
    residual: Session


def find_redex(m: Session, lab: Label) -> Redex:
    """The unique redex for ``lab`` and the untouched rest of the session."""
    from .syntax import inp, out

    p, msg, q = lab
    if p == q:
        raise NoRedex(f"no redex for {lab}")
    cont_p = m[p].io()[0].get((q, msg))
    cont_q = m[q].io()[1].get((p, msg))
    if cont_p is None or cont_q is None:
        raise NoRedex(f"no redex for {lab}")
    residual = Session(tuple(e for e in m.entries if e[0] not in (p, q)))
    return Redex((out(q, msg), cont_p), (inp(p, msg), cont_q), residual)


def step(m: Session, lab: Label) -> Session:
    """Rule Comm: both partners continue with the matched branches."""
    p, msg, q = lab
    cont_p = m[p].io()[0].get((q, msg))
    cont_q = m[q].io()[1].get((p, msg))
    if cont_p is None or cont_q is None or p == q:
        raise NoRedex(f"no redex for {lab}")
    return m.advance({p: cont_p, q: cont_q})


def run_trace(m: Session, trace: Iterable[Label]) -> Session:
    for i, lab in enumerate(trace):
        try:
            m = step(m, lab)
        except NoRedex:
            raise TraceError(i, lab, m) from None
    return m


@dataclass
class SessionGraph:
    """Explicit reachability graph; state 0 is the root, states in BFS order."""

    states: list[Session]
    edges: list[tuple[int, Label, int]]
    index: dict[Session, int] = field(repr=False)
    parent: list[tuple[int, Label] | None] = field(repr=False)

    @property
    def root(self) -> Session:
        return self.states[0]

    def successors(self, i: int) -> list[tuple[Label, int]]:
        return self._out[i]

    def __post_init__(self):
        self._out: list[list[tuple[Label, int]]] = [[] for _ in self.states]
        for s, lab, t in self.edges:
            self._out[s].append((lab, t))

    def trace_to(self, i: int) -> Trace:
        """A shortest trace from the root to state ``i``."""
        path = []
        while self.parent[i] is not None:
            j, lab = self.parent[i]
            path.append(lab)
            i = j
        return tuple(reversed(path))


def reachable_graph(m: Session, budget: int | None = None) -> SessionGraph:
    """BFS over the session LTS; the result is cached and must not be mutated."""
    return _reachable_graph(m, DEFAULT_STATE_BUDGET if budget is None else budget)


@lru_cache(maxsize=8)
@gc_paused
def _reachable_graph(m: Session, budget: int) -> SessionGraph:
    index = {m: 0}
    states = [m]
    parent: list = [None]
    edges = []
    todo = deque([0])
    while todo:
        i = todo.popleft()
        s = states[i]
        for lab in sorted_labels(s):
            t = step(s, lab)
            j = index.get(t)
            if j is None:
                if len(states) >= budget:
                    raise BudgetExceeded(f"more than {budget} reachable states")
                j = index[t] = len(states)
                states.append(t)
                parent.append((i, lab))
                todo.append(j)
            edges.append((i, lab, j))
    return SessionGraph(states, edges, index, parent)


@dataclass(frozen=True)
class LockReport:
    verdict: bool
    trace: Trace | None = None
    participant: Participant | None = None
    state: Session | None = None

    @property
    def witness(self):
        return None if self.verdict else (self.trace, self.participant)


@gc_paused
def locked_pairs(g: SessionGraph) -> list[tuple[int, Participant]]:
    """All (state, participant) pairs violating lock freedom, in state order."""
    preds: list[list[tuple[int, Label]]] = [[] for _ in g.states]
    for s, lab, t in g.edges:
        preds[t].append((s, lab))
    ptps = sorted({p for st in g.states for p in st.participants})
    bad = []
    for p in ptps:
        # States from which a p-label is reachable along p-avoiding edges.
        good = {s for s, lab, _ in g.edges if p in (lab.sender, lab.receiver)}
        todo = deque(good)
        while todo:
            t = todo.popleft()
            for s, lab in preds[t]:
                if s not in good and p not in (lab.sender, lab.receiver):
                    good.add(s)
                    todo.append(s)
        bad.extend((i, p) for i, st in enumerate(g.states) if p in st and i not in good)
    bad.sort()
    return bad


def check_lock_free(m: Session | SessionGraph, budget: int | None = None) -> LockReport:
    g = m if isinstance(m, SessionGraph) else reachable_graph(m, budget)
    bad = locked_pairs(g)
    if not bad:
        return LockReport(True)
    i, p = bad[0]
    return LockReport(False, g.trace_to(i), p, g.states[i])


@gc_paused
def avoid_distances(g: SessionGraph, p: Participant) -> dict[int, int]:
    """Length of the shortest p-avoiding path to a state enabling a p-label."""
    preds: list[list[tuple[int, Label]]] = [[] for _ in g.states]
    for s, lab, t in g.edges:
        preds[t].append((s, lab))
    dist = {}
    todo = deque()
    for s, lab, _ in g.edges:
        if p in (lab.sender, lab.receiver) and s not in dist:
            dist[s] = 0
            todo.append(s)
    while todo:
        t = todo.popleft()
        for s, lab in preds[t]:
            if s not in dist and p not in (lab.sender, lab.receiver):
                dist[s] = dist[t] + 1
                todo.append(s)
    return dist
