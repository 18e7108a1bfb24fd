"""Brute-force reference implementations used to cross-check the package.

Everything here works on the local views of terms (``.nodes``) or on plain
Python data, and shares no code with the algorithms under test beyond term
construction.
"""

from __future__ import annotations

from collections import deque

from modsess.globaltypes import GlobalType
from modsess.syntax import Direction, Label, Session, canonical_session


# -- terms --------------------------------------------------------------------


def unfold_equal(rows_a, rows_b, root_a=0, root_b=0) -> bool:
    """Bisimilarity of two deterministic labelled graphs by pair exploration."""
    seen = set()
    todo = [(root_a, root_b)]
    while todo:
        a, b = todo.pop()
        if (a, b) in seen:
            continue
        seen.add((a, b))
        ra, rb = dict(rows_a[a]), dict(rows_b[b])
        if set(ra) != set(rb):
            return False
        todo.extend((ra[k], rb[k]) for k in ra)
    return True


# -- sessions -------------------------------------------------------------------


def enabled(m: Session) -> set[Label]:
    out = set()
    for p, P in m:
        for q, Q in m:
            if p == q:
                continue
            for k, _ in P.branches:
                if k.direction != Direction.OUTPUT or k.partner != q:
                    continue
                for k2, _ in Q.branches:
                    if k2.direction == Direction.INPUT and k2.partner == p and k2.message == k.message:
                        out.add(Label(p, k.message, q))
    return out


def successor(m: Session, lab: Label) -> Session:
    procs = dict(m)
    p, msg, q = lab
    sent = [c for k, c in procs[p].branches if (k.partner, k.direction, k.message) == (q, Direction.OUTPUT, msg)]
    got = [c for k, c in procs[q].branches if (k.partner, k.direction, k.message) == (p, Direction.INPUT, msg)]
    assert len(sent) == 1 and len(got) == 1
    procs[p], procs[q] = sent[0], got[0]
    return canonical_session(procs)


def state_graph(m: Session) -> tuple[list[Session], set[tuple[Session, Label, Session]]]:
    states, edges = [m], set()
    seen = {m}
    todo = deque([m])
    while todo:
        s = todo.popleft()
        for lab in enabled(s):
            t = successor(s, lab)
            edges.add((s, lab, t))
            if t not in seen:
                seen.add(t)
                states.append(t)
                todo.append(t)
    return states, edges


def locked(m: Session) -> set[tuple[Session, str]]:
    """Pairs (state, p) where p can never communicate along a p-avoiding run."""
    states, edges = state_graph(m)
    out_edges: dict[Session, list[tuple[Label, Session]]] = {s: [] for s in states}
    for s, lab, t in edges:
        out_edges[s].append((lab, t))
    bad = set()
    for s in states:
        for p in s.participants:
            seen, stack, ok = {s}, [s], False
            while stack and not ok:
                x = stack.pop()
                for lab, y in out_edges[x]:
                    if p in (lab.sender, lab.receiver):
                        ok = True
                        break
                    if y not in seen:
                        seen.add(y)
                        stack.append(y)
            if not ok:
                bad.add((s, p))
    return bad


def lock_free(m: Session) -> bool:
    return not locked(m)


# -- partitions -----------------------------------------------------------------


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [part[i] | {first}] + part[i + 1:]
        yield part + [frozenset([first])]


def freeze(blocks) -> frozenset:
    return frozenset(frozenset(b) for b in blocks)


def connecting(proc, inside) -> bool:
    for row in proc.nodes:
        partners = {k.partner for k, _ in row}
        if len(partners) >= 2 and not partners <= set(inside):
            return False
    return True


def modularisable(m: Session, part) -> bool:
    """Both module conditions, with each module's inside taken to be its block."""
    live = set(m.participants)
    home = {p: b for b in part for p in b}

    def connector(p):
        proc = dict(m)[p]
        return connecting(proc, home[p]) and bool(proc.partners - home[p])

    for p, proc in m:
        outside = (proc.partners & live) - home[p]
        if outside and not connector(p):
            return False
        if connector(p):
            for q in outside:
                if not connector(q):
                    return False
    return True


def coherent_sets(m: Session, part) -> set[frozenset[Label]]:
    labs = enabled(m)
    live = set(m.participants)
    return {frozenset(l for l in labs if {l.sender, l.receiver} & b) for b in part if b & live}


# -- global types ---------------------------------------------------------------


def gt_step(g: GlobalType, lab: Label) -> GlobalType | None:
    """The I-comm/E-comm step computed as a greatest fixpoint on the local view.

    A node can fire ``lab`` when it has it on top, or when every branch label
    is independent of it, ``lab`` occurs below every branch, and every
    continuation can fire it.  Failure is the least fixpoint of the negation.
    """
    rows = g.nodes
    n = len(rows)
    below = [set() for _ in range(n)]
    changed = True
    while changed:
        changed = False
        for i, row in enumerate(rows):
            acc = set(below[i])
            for k, j in row:
                acc.add(k)
                acc |= below[j]
            if acc != below[i]:
                below[i] = acc
                changed = True
    parts = {lab.sender, lab.receiver}
    top = [dict(row) for row in rows]
    bad = set()
    for i, row in enumerate(rows):
        if lab in top[i]:
            continue
        if not row or any({k.sender, k.receiver} & parts or lab not in below[j] for k, j in row):
            bad.add(i)
    changed = True
    while changed:
        changed = False
        for i, row in enumerate(rows):
            if i in bad or lab in top[i]:
                continue
            if any(j in bad for _, j in row):
                bad.add(i)
                changed = True
    if 0 in bad:
        return None
    graph: dict = {}
    for i, row in enumerate(rows):
        graph[("old", i)] = [(k, ("old", j)) for k, j in row] or None
    for i, row in enumerate(rows):
        if i in bad:
            continue
        if lab in top[i]:
            graph[("new", i)] = list(graph[("old", top[i][lab])] or []) or None
        else:
            graph[("new", i)] = [(k, ("new", j)) for k, j in row]
    return GlobalType.from_graph(graph, ("new", 0))


def type_plays(rows) -> list[set]:
    """Participants occurring at or below each node, by fixpoint iteration."""
    acc = [set() for _ in rows]
    changed = True
    while changed:
        changed = False
        for i, row in enumerate(rows):
            new = set(acc[i])
            for k, j in row:
                new |= {k.sender, k.receiver} | acc[j]
            if new != acc[i]:
                acc[i] = new
                changed = True
    return acc


def well_typed(g: GlobalType, m: Session, part) -> bool:
    """The coinductive typing judgement checked on every reachable (node, state) pair."""
    rows = g.nodes
    plays = type_plays(rows)
    seen = {(0, m)}
    todo = [(0, m)]
    while todo:
        n, s = todo.pop()
        row = rows[n]
        if not row or s.is_empty:
            if row or not s.is_empty:
                return False
            continue
        if not modularisable(s, part):
            return False
        top = frozenset(k for k, _ in row)
        if not top or top not in coherent_sets(s, part):
            return False
        if plays[n] != set(s.participants):
            return False
        for k, j in row:
            nxt = (j, successor(s, k))
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return True
