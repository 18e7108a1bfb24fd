"""Connecting processes, connectors and partition-based modularisation."""

from __future__ import annotations

import random
from functools import lru_cache
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .syntax import Participant, Process, Session, plays_session

Block = frozenset  # of Participant
Partition = frozenset  # of Block


def make_partition(blocks: Iterable[Iterable[Participant]]) -> Partition:
    """Validate and freeze a partition: blocks nonempty and pairwise disjoint."""
    out = []
    seen: set[Participant] = set()
    for b in blocks:
        b = frozenset(b)
        if not b:
            raise ValueError("partition blocks must be nonempty")
        clash = b & seen
        if clash:
            raise ValueError(f"participant {min(clash)} occurs in two blocks")
        seen |= b
        out.append(b)
    return frozenset(out)


def coarse_partition(m: Session) -> Partition:
    ptps = plays_session(m)
    return frozenset([ptps]) if ptps else frozenset()


def singleton_partition(m: Session) -> Partition:
    return frozenset(frozenset([p]) for p in m.participants)


def sorted_blocks(part: Partition) -> list[Block]:
    return list(_sorted_blocks(part))


@lru_cache(maxsize=64)
def _sorted_blocks(part: Partition) -> tuple[Block, ...]:
    return tuple(sorted(part, key=lambda b: sorted(b)))


def block_of(part: Partition, p: Participant) -> Block | None:
    for b in part:
        if p in b:
            return b
    return None


def is_connecting(proc: Process, ptps: Iterable[Participant]) -> bool:
    """Every choice that involves an outsider involves only that outsider."""
    return shared_choices(proc) <= frozenset(ptps)


def is_connector(p: Participant, sub: Session, block: Iterable[Participant] | None = None) -> bool:
    """``p`` is connecting for its module and talks to someone outside it.

    The module is ``block`` when given, otherwise the participants of ``sub``.
    Passing the partition block keeps members that have already terminated
    inside the module, which is what makes modularity stable under reduction.
    """
    if p not in sub:
        raise KeyError(f"{p} does not occur in the subsession")
    inside = plays_session(sub) if block is None else frozenset(block)
    proc = sub[p]
    return is_connecting(proc, inside) and bool(proc.partners - inside)


def p_partition(m: Session, part: Partition) -> dict[Block, Session]:
    """The unique assignment of the session's entries to blocks (nonempty modules only)."""
    out: dict[Block, Session] = {}
    for p in m.participants:
        if block_of(part, p) is None:
            raise ValueError(f"participant {p} is not covered by the partition")
    for b in sorted_blocks(part):
        sub = m.restrict(b)
        if not sub.is_empty:
            out[b] = sub
    return out


class ModViolation(NamedTuple):
    participant: Participant
    partner: Participant
    reason: str

    def __str__(self) -> str:
        return f"{self.participant}: {self.reason}"


@dataclass(frozen=True)
class Module:
    block: Block
    subsession: Session
    connectors: frozenset[Participant]


def modularisation(m: Session, part: Partition) -> list[Module]:
    mods = []
    for b, sub in p_partition(m, part).items():
        conns = frozenset(p for p in sub.participants if is_connector(p, sub, b))
        mods.append(Module(b, sub, conns))
    return mods


def check_modularisation(m: Session, part: Partition) -> list[ModViolation]:
    """Violations of the two module conditions; empty means modularisable."""
    home = block_map(part)
    ptps = plays_session(m)
    missing = [p for p in m.participants if p not in home]
    if missing:
        raise ValueError(f"participant {missing[0]} is not covered by the partition")
    out = []
    for p, proc in m:
        b = home[p]
        external = proc.partners - b
        if not external:
            continue
        live = sorted(external & ptps)
        if not shared_choices(proc) <= b:
            out.extend(ModViolation(p, q, f"talks to {q} outside its module without being a connector") for q in live)
            continue
        for q in live:
            other = m[q]
            if not (shared_choices(other) <= home[q] and other.partners - home[q]):
                out.append(ModViolation(p, q, f"connector partner {q} is not a connector of its module"))
    return out


@lru_cache(maxsize=64)
def block_map(part: Partition) -> dict[Participant, Block]:
    return {p: b for b in part for p in b}


def is_modularisable(m: Session, part: Partition) -> bool:
    return not check_modularisation(m, part)


def refines(fine: Partition, coarse: Partition) -> bool:
    """Each block of ``coarse`` is a union of blocks of ``fine``."""
    for b in coarse:
        parts = [f for f in fine if f & b]
        if any(not f <= b for f in parts):
            return False
        if frozenset().union(*parts) != b:
            return False
    return True


class _UnionFind:
    def __init__(self, items: Iterable[Participant]):
        self.parent = {x: x for x in items}

    def find(self, x: Participant) -> Participant:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: Participant, b: Participant) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def blocks(self) -> dict[Participant, set[Participant]]:
        out: dict[Participant, set[Participant]] = {}
        for x in self.parent:
            out.setdefault(self.find(x), set()).add(x)
        return out


_SHARED: dict[int, frozenset[Participant]] = {}


def shared_choices(proc: Process) -> frozenset[Participant]:
    """Partners occurring in some choice that involves two or more partners."""
    got = _SHARED.get(proc.id)
    if got is None:
        out: set[Participant] = set()
        for row in proc.nodes:
            partners = {k.partner for k, _ in row}
            if len(partners) > 1:
                out |= partners
        got = _SHARED[proc.id] = frozenset(out)
    return got


def minimal_partition(m: Session, rng: random.Random | None = None) -> Partition:
    """Finest partition modularising ``m``.

    Any modularisation keeps a participant together with every partner of its
    multi-partner choices, so those merges are done up front.  After that each
    merge of the iterative rule is forced in every modularising partition,
    hence the fixed point is the minimum whatever the merge order; ``rng``
    shuffles that order.
    """
    uf = _UnionFind(m.participants)
    ptps = plays_session(m)
    for p, proc in m:
        for q in sorted(shared_choices(proc) & ptps):
            uf.union(p, q)
    pairs = [(p, q) for p, proc in m for q in sorted(proc.partners & ptps)]
    changed = True
    while changed:
        changed = False
        if rng is not None:
            rng.shuffle(pairs)
        blocks = uf.blocks()
        for p, q in pairs:
            rp, rq = uf.find(p), uf.find(q)
            if rp == rq:
                continue
            bp, bq = blocks[rp], blocks[rq]
            if not is_connecting(m[p], bp) or not is_connector(q, m.restrict(bq), bq):
                uf.union(p, q)
                changed = True
                break
    return frozenset(frozenset(b) for b in uf.blocks().values())


def literal_minimal_partition(m: Session) -> Partition:
    """The merge rule applied from singletons with no preparatory merges.

    Kept for comparison: it can merge more than necessary, because a process
    that is not connecting for a small block may become connecting once the
    block grows.
    """
    uf = _UnionFind(m.participants)
    ptps = plays_session(m)
    pairs = [(p, q) for p, proc in m for q in sorted(proc.partners & ptps)]
    changed = True
    while changed:
        changed = False
        blocks = uf.blocks()
        for p, q in pairs:
            rp, rq = uf.find(p), uf.find(q)
            if rp != rq and (
                not is_connecting(m[p], blocks[rp]) or not is_connector(q, m.restrict(blocks[rq]), blocks[rq])
            ):
                uf.union(p, q)
                changed = True
                break
    return frozenset(frozenset(b) for b in uf.blocks().values())
