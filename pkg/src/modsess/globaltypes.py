"""Regular global types and their transition system.

Top-level communications fire by E-comm.  I-comm lets a label that is
independent of every top-level branch fire underneath all of them; the rule is
coinductive, so the recursion ties knots on revisited nodes and relies on the
capability premise to rule out vacuous infinite derivations.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Hashable

from .syntax import Label, Participant
from .terms import IllFormed, Node, RawGraph, RegularTerm, Store, Violation, check_graph

DEFAULT_NODE_BUDGET = int(os.environ.get("MODSESS_NODE_BUDGET", 100_000))


class GlobalType(RegularTerm):
    """A canonical regular global type; the leaf is ``End``."""

    __slots__ = ()


END = GlobalType.leaf()


class NoTransition(ValueError):
    pass


class TypeExplosion(RuntimeError):
    pass


def describe_dup_label(lab: Label) -> str:
    return f"duplicate branch {lab.sender}->{lab.receiver}:{lab.message}"


@dataclass(frozen=True)
class GlobalGraph:
    nodes: RawGraph
    root: Hashable

    def build(self) -> GlobalType:
        violations = wf_global(self)
        if violations:
            raise IllFormed(violations)
        return GlobalType.from_graph(self.nodes, self.root)


def wf_global(g: GlobalGraph | GlobalType) -> list[Violation]:
    if isinstance(g, GlobalType):
        return []
    out = check_graph(g.nodes, g.root, describe_dup_label)
    for n, payload in g.nodes.items():
        if isinstance(payload, (list, tuple)):
            for lab, _ in payload:
                if lab.sender == lab.receiver:
                    out.append(Violation(n, f"self communication {lab}"))
    return out


def comm(lab: Label, cont: GlobalType = END) -> GlobalType:
    return GlobalType.choice([(lab, cont)])


def gsum(*branches: tuple[Label, GlobalType]) -> GlobalType:
    return GlobalType.choice(branches)


def capabilities(g: GlobalType) -> frozenset[Label]:
    return g.all_keys()


_PLAYS: dict[int, frozenset[Participant]] = {}


def plays_global(g: GlobalType) -> frozenset[Participant]:
    got = _PLAYS.get(g.id)
    if got is None:
        got = _PLAYS[g.id] = frozenset(p for lab in g.all_keys() for p in (lab.sender, lab.receiver))
    return got


def node_plays(g: GlobalType) -> list[frozenset[Participant]]:
    """Participants of the subterm at each canonical node."""
    return [frozenset(p for lab in ks for p in (lab.sender, lab.receiver)) for ks in g.key_closure()]


def gt_step(g: GlobalType, lab: Label, budget: int | None = None) -> GlobalType:
    """The unique ``G'`` with ``g --lab--> G'``; raises :class:`NoTransition`.

    Results, including those of every subterm visited by I-comm, are
    memoised per (node, label) in the store.
    """
    store = GlobalType.store
    memo = store.memo
    done = memo.get((g.id, lab))
    if isinstance(done, int):
        return GlobalType.of_id(done)
    if isinstance(done, str):
        raise NoTransition(done)
    try:
        rid = _step_id(store, g.id, lab, DEFAULT_NODE_BUDGET if budget is None else budget)
    except NoTransition as e:
        memo[(g.id, lab)] = str(e)
        raise
    return GlobalType.of_id(rid)


def _step_id(store: Store, root: int, lab: Label, budget: int) -> int:
    rows, closure, memo = store.rows, store.closure, store.memo
    for k, c in rows[root]:
        if k == lab:
            memo[(root, lab)] = c
            return c
    lp = lab.participants
    raw: dict[int, list] = {}
    stack = [root]
    while stack:
        i = stack.pop()
        if i in raw:
            continue
        row = rows[i]
        if not row:
            _fail(memo, i, lab, f"{lab} cannot fire: End reached")
        new_row = []
        for k, c in row:
            if k.participants & lp:
                _fail(memo, i, lab, f"{lab} cannot fire: not independent of {k}")
            if lab not in closure[c]:
                _fail(memo, i, lab, f"{lab} cannot fire: not a capability below {k}")
            fired = next((s for kk, s in rows[c] if kk == lab), None)
            if fired is None:
                prior = memo.get((c, lab))
                if isinstance(prior, str):
                    _fail(memo, i, lab, prior)
                if isinstance(prior, int):
                    fired = prior
            if fired is not None:
                new_row.append((k, Node(fired)))
            else:
                new_row.append((k, c))
                stack.append(c)
        raw[i] = new_row
        if len(raw) > budget:
            raise TypeExplosion(f"I-comm construction exceeded {budget} nodes")
    ids = store.insert_all(raw, root)
    for i, j in ids.items():
        memo[(i, lab)] = j
    return ids[root]


def _fail(memo: dict, i: int, lab: Label, reason: str):
    # Whoever needs node i to fire lab fails for the same reason.
    memo[(i, lab)] = reason
    raise NoTransition(reason)


def try_gt_step(g: GlobalType, lab: Label) -> GlobalType | None:
    try:
        return gt_step(g, lab)
    except NoTransition:
        return None


def gt_enabled(g: GlobalType) -> frozenset[Label]:
    """Labels the type can fire.

    Besides the top-level labels only labels independent of all of them and
    occurring below every branch are candidates for I-comm.
    """
    rows, closure = GlobalType.store.rows, GlobalType.store.closure
    row = rows[g.id]
    top = {k for k, _ in row}
    if not row:
        return frozenset()
    busy = frozenset(p for k in top for p in (k.sender, k.receiver))
    below = frozenset.intersection(*(closure[c] for _, c in row))
    found = set(top)
    for lab in below:
        if lab not in top and not (lab.participants & busy) and try_gt_step(g, lab) is not None:
            found.add(lab)
    return frozenset(found)


def gt_equal(g: GlobalType, h: GlobalType) -> bool:
    """Bisimilarity of the two regular trees."""
    return g is h
