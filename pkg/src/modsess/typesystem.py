"""Coherent label sets and the partition-indexed type system.

Inference first follows a fixed module-choice policy over the canonical state
space.  A closed choice graph is then checked against the participant
condition; when that fails for a lock-free session a second construction
chases each participant in turn, so that every participant of a state shows up
below the corresponding type node.  Typability under a partition coincides
with modularisability plus lock freedom, so the fallback never changes a
verdict, it only repairs an unlucky choice sequence.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Literal, Union

import networkx as nx

from ._gc import gc_paused
from .globaltypes import END, GlobalType, node_plays
from .lts import (
    DEFAULT_STATE_BUDGET,
    BudgetExceeded,
    SessionGraph,
    avoid_distances,
    check_lock_free,
    enabled_labels,
    reachable_graph,
    step,
)
from .modular import (
    Block,
    Partition,
    block_of,
    check_modularisation,
    coarse_partition,
    minimal_partition,
    sorted_blocks,
)
from .syntax import Label, Participant, Session, Trace, plays_session

NOT_MODULARISABLE = "not modularisable"
EMPTY_COHERENT_SET = "empty coherent set"
PLAYS_MISMATCH = "plays mismatch"

PartitionChoice = Union[Partition, Literal["minimal", "coarse"]]


class NotModularisable(ValueError):
    pass


@dataclass(frozen=True)
class CoherentSet:
    labels: frozenset[Label]
    witness: Block


def resolve_partition(m: Session, part: PartitionChoice | None) -> Partition:
    if part is None or part == "minimal":
        return minimal_partition(m)
    if part == "coarse":
        return coarse_partition(m)
    uncovered = [p for p in m.participants if block_of(part, p) is None]
    if uncovered:
        raise ValueError(f"participant {uncovered[0]} is not covered by the partition")
    return part


def coherent_sets(m: Session, part: Partition) -> dict[Block, frozenset[Label]]:
    """Coherent set of every block meeting the session, blocks in sorted order."""
    return dict(_coherent_sets(m, part))


@lru_cache(maxsize=1 << 18)
def _coherent_sets(m: Session, part: Partition) -> tuple[tuple[Block, frozenset[Label]], ...]:
    violations = check_modularisation(m, part)
    if violations:
        raise NotModularisable(str(violations[0]))
    enabled = enabled_labels(m)
    ptps = plays_session(m)
    out = []
    for b in sorted_blocks(part):
        live = b & ptps
        if live:
            out.append((b, frozenset(lab for lab in enabled if lab.participants & live)))
    return tuple(out)


def coherent_set(m: Session, part: Partition, block: Block) -> CoherentSet:
    block = frozenset(block)
    if block not in part:
        raise KeyError(f"block {sorted(block)} is not in the partition")
    sets = coherent_sets(m, part)
    if block not in sets:
        raise ValueError(f"block {sorted(block)} has no participant in the session")
    return CoherentSet(sets[block], block)


def policy_block(m: Session, sets: dict[Block, frozenset[Label]]) -> Block | None:
    """The block holding the least live participant among nonempty coherent sets."""
    ptps = plays_session(m)
    candidates = [b for b, labs in sets.items() if labs]
    if not candidates:
        return None
    return min(candidates, key=lambda b: min(b & ptps))


@dataclass(frozen=True)
class TypingVerdict:
    typable: bool
    partition: Partition
    type: GlobalType | None = None
    reason: str | None = None
    state: Session | None = None
    trace: Trace | None = None
    participant: Participant | None = None
    detail: str = ""
    states_explored: int = field(default=0, compare=False)

    def __bool__(self) -> bool:
        return self.typable


def _reach_plays(rows: list[list[tuple[Label, int]] | None]) -> list[frozenset[Participant]]:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(rows)))
    g.add_edges_from((i, j) for i, row in enumerate(rows) for _, j in row or ())
    cond = nx.condensation(g)
    comp: dict[int, frozenset] = {}
    for c in reversed(list(nx.topological_sort(cond))):
        acc: set[Participant] = set()
        for i in cond.nodes[c]["members"]:
            for lab, _ in rows[i] or ():
                acc.update(lab.participants)
        for d in cond.successors(c):
            acc |= comp[d]
        comp[c] = frozenset(acc)
    mapping = cond.graph["mapping"]
    return [comp[mapping[i]] for i in range(len(rows))]


def _trace(parent: list, i: int) -> Trace:
    path = []
    while parent[i] is not None:
        i, lab = parent[i]
        path.append(lab)
    return tuple(reversed(path))


@gc_paused
def infer_type(
    m: Session,
    part: PartitionChoice | None = "minimal",
    *,
    root_block: Block | None = None,
    budget: int | None = None,
) -> TypingVerdict:
    """Derive a global type for ``m`` under ``part``, or explain why none exists.

    ``root_block`` forces the coherent set used at the root; it must be
    nonempty there.
    """
    part = resolve_partition(m, part)
    if m.is_empty:
        return TypingVerdict(True, part, END)
    violations = check_modularisation(m, part)
    if violations:
        return TypingVerdict(
            False, part, reason=NOT_MODULARISABLE, state=m, trace=(), participant=violations[0].participant,
            detail=str(violations[0]),
        )
    if root_block is not None:
        root_block = frozenset(root_block)
        if not coherent_set(m, part, root_block).labels:
            raise ValueError(f"block {sorted(root_block)} has an empty coherent set at the root")

    # Choice graph under the deterministic policy.
    limit = DEFAULT_STATE_BUDGET if budget is None else budget
    states = [m]
    index = {m: 0}
    parent: list = [None]
    rows: list[list[tuple[Label, int]] | None] = []
    i = 0
    while i < len(states):
        s = states[i]
        if s.is_empty:
            rows.append(None)
            i += 1
            continue
        try:
            sets = coherent_sets(s, part)
        except NotModularisable as e:
            bad = check_modularisation(s, part)[0]
            return TypingVerdict(
                False, part, reason=NOT_MODULARISABLE, state=s, trace=_trace(parent, i), participant=bad.participant,
                detail=str(e), states_explored=len(states),
            )
        b = root_block if (i == 0 and root_block is not None) else policy_block(s, sets)
        if b is None:
            return TypingVerdict(
                False, part, reason=EMPTY_COHERENT_SET, state=s, trace=_trace(parent, i),
                detail="no module has an enabled communication", states_explored=len(states),
            )
        row = []
        for lab in sorted(sets[b]):
            t = step(s, lab)
            j = index.get(t)
            if j is None:
                j = index[t] = len(states)
                states.append(t)
                parent.append((i, lab))
            row.append((lab, j))
        rows.append(row)
        i += 1
        if len(states) > limit:
            raise BudgetExceeded(f"more than {limit} states in the choice graph")

    reach = _reach_plays(rows)
    mismatch = next((k for k, s in enumerate(states) if reach[k] != plays_session(s)), None)
    if mismatch is None:
        g = GlobalType.from_graph({k: r for k, r in enumerate(rows)}, 0)
        return TypingVerdict(True, part, g, states_explored=len(states))

    full = reachable_graph(m, budget)
    lock = check_lock_free(full)
    if not lock.verdict:
        s = states[mismatch]
        missing = min(plays_session(s) - reach[mismatch])
        return TypingVerdict(
            False, part, reason=PLAYS_MISMATCH, state=s, trace=_trace(parent, mismatch), participant=missing,
            detail=f"{missing} never occurs in the type below this state; locked participant {lock.participant}",
            states_explored=len(full.states),
        )
    try:
        g = _chase_targets(full, part, root_block)
    except NotModularisable as e:
        return TypingVerdict(False, part, reason=NOT_MODULARISABLE, state=m, trace=(), detail=str(e),
                             states_explored=len(full.states))
    failure = typing_failure(g, m, part)
    if failure is not None:  # pragma: no cover - would contradict the completeness argument
        raise AssertionError(f"fallback construction produced an ill-typed result: {failure}")
    return TypingVerdict(True, part, g, states_explored=len(full.states), detail="participant-chasing construction")


def _chase_targets(full: SessionGraph, part: Partition, root_block: Block | None) -> GlobalType:
    order = sorted(plays_session(full.root))
    pos = {p: k for k, p in enumerate(order)}
    dist = {p: avoid_distances(full, p) for p in order}
    succ = [dict(full.successors(i)) for i in range(len(full.states))]

    def present(i: int, start: int) -> Participant | None:
        s = full.states[i]
        for k in range(len(order)):
            p = order[(start + k) % len(order)]
            if p in s:
                return p
        return None

    def designated(i: int, t: Participant) -> Label:
        d = dist[t][i]
        labs = sorted(succ[i])
        if d == 0:
            return next(lab for lab in labs if t in lab.participants)
        return next(
            lab for lab in labs if t not in lab.participants and dist[t].get(succ[i][lab]) == d - 1
        )

    graph: dict[Hashable, object] = {}
    todo: deque = deque()

    def node_for(j: int, t: Participant, served: bool) -> Hashable:
        key = (j, present(j, pos[t] + 1 if served else pos[t]))
        if key not in graph:
            graph[key] = None
            todo.append(key)
        return key

    def expand(i: int, t: Participant, b: Block | None) -> list | None:
        s = full.states[i]
        if s.is_empty:
            return None
        if b is None:
            b = block_of(part, designated(i, t).sender)
        return [
            (lab, node_for(succ[i][lab], t, t in lab.participants))
            for lab in sorted(coherent_sets(s, part)[b])
        ]

    t0 = present(0, 0)
    root = ("root",)
    graph[root] = expand(0, t0, root_block)
    while todo:
        key = todo.popleft()
        graph[key] = expand(key[0], key[1], None)
    return GlobalType.from_graph(graph, root)


@dataclass(frozen=True)
class TypingFailure:
    reason: str
    state: Session
    trace: Trace

    def __str__(self) -> str:
        from .syntax import format_trace

        return f"{self.reason} after {format_trace(self.trace)}"


@gc_paused
def typing_failure(g: GlobalType, m: Session, part: Partition) -> TypingFailure | None:
    """First failing (type node, state) pair of a coinductive derivation, if any."""
    gplays = node_plays(g)
    seen = {(0, m): None}
    todo = deque([(0, m)])
    coh_cache: dict[Session, object] = {}
    while todo:
        pair = todo.popleft()
        n, s = pair
        row = g.nodes[n]
        reason = _local_failure(row, gplays[n], s, part, coh_cache)
        if reason is not None:
            return TypingFailure(reason, s, _pair_trace(seen, pair))
        for lab, t in row:
            nxt = (t, step(s, lab))
            if nxt not in seen:
                seen[nxt] = (pair, lab)
                todo.append(nxt)
    return None


def _pair_trace(seen: dict, pair) -> Trace:
    path = []
    while seen[pair] is not None:
        pair, lab = seen[pair]
        path.append(lab)
    return tuple(reversed(path))


def _local_failure(row, gplays, s: Session, part: Partition, cache: dict) -> str | None:
    if not row:
        return None if s.is_empty else "End paired with a nonempty session"
    if s.is_empty:
        return "communication paired with the empty session"
    sets = cache.get(s)
    if sets is None:
        try:
            sets = coherent_sets(s, part)
        except NotModularisable as e:
            sets = e
        cache[s] = sets
    if isinstance(sets, Exception):
        return f"{NOT_MODULARISABLE}: {sets}"
    keys = frozenset(k for k, _ in row)
    if keys not in sets.values():
        return "top-level labels are not a coherent set"
    if gplays != plays_session(s):
        return PLAYS_MISMATCH
    return None


def local_typing_failure(g: GlobalType, s: Session, part: Partition) -> str | None:
    """Premises of the typing rule at the root of ``g`` only (successors excluded)."""
    return _local_failure(g.nodes[0], node_plays(g)[0], s, part, {})


def check_typing(g: GlobalType, m: Session, part: Partition) -> bool:
    return typing_failure(g, m, part) is None


@dataclass(frozen=True)
class ConditionReport:
    verdict: bool
    trace: Trace | None = None
    state: Session | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.verdict


@gc_paused
def check_safety(m: Session | SessionGraph, budget: int | None = None) -> ConditionReport:
    """An output facing any input from the same sender must be able to synchronise."""
    g = m if isinstance(m, SessionGraph) else reachable_graph(m, budget)
    for i, s in enumerate(g.states):
        enabled = enabled_labels(s)
        for p, proc in s:
            outs, _ = proc.io()
            for q, msg in sorted(outs):
                if any(src == p for src, _ in s[q].io()[1]) and Label(p, msg, q) not in enabled:
                    return ConditionReport(
                        False, g.trace_to(i), s, f"{p} offers {q}!{msg} while {q} waits for {p} on another message"
                    )
    return ConditionReport(True)


@gc_paused
def check_output_viability(m: Session | SessionGraph, budget: int | None = None) -> ConditionReport:
    """Every offered output can eventually fire."""
    g = m if isinstance(m, SessionGraph) else reachable_graph(m, budget)
    preds: list[list[int]] = [[] for _ in g.states]
    sources: dict[Label, set[int]] = {}
    for s, lab, t in g.edges:
        preds[t].append(s)
        sources.setdefault(lab, set()).add(s)
    can_reach: dict[Label, set[int]] = {}

    def reach(lab: Label) -> set[int]:
        got = can_reach.get(lab)
        if got is None:
            got = set(sources.get(lab, ()))
            todo = deque(got)
            while todo:
                t = todo.popleft()
                for s in preds[t]:
                    if s not in got:
                        got.add(s)
                        todo.append(s)
            can_reach[lab] = got
        return got

    for i, s in enumerate(g.states):
        for p, proc in s:
            for q, msg in sorted(proc.io()[0]):
                lab = Label(p, msg, q)
                if i not in reach(lab):
                    return ConditionReport(False, g.trace_to(i), s, f"output {q}!{msg} of {p} can never fire")
    return ConditionReport(True)
