"""Hash-consed regular terms.

A coinductive regular term is a node of a global store kept minimal: two
distinct node ids never denote bisimilar trees.  Interning a raw graph then
amounts to resolving each of its nodes to a store id, so bisimilarity of
terms is an identity test and building a term that shares most of its
structure with existing ones only costs the new part.

Branch keys must be totally ordered and hashable.  Every node is either a
leaf (no branches) or a choice with distinct keys; this makes the branching
structure deterministic, which is what lets minimisation compute
bisimilarity.

Acyclic nodes are resolved bottom-up by looking their row up.  A strongly
connected group of raw nodes is first minimised on its own, then matched
against the cyclic part of the store by a greatest-fixpoint check.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, ClassVar, Hashable, Iterable, Mapping, NamedTuple, Sequence, TypeVar

import networkx as nx

T = TypeVar("T", bound="RegularTerm")


@dataclass(frozen=True)
class Ref:
    """An unguarded alias node: the node denotes whatever ``target`` denotes."""

    target: Hashable


@dataclass(frozen=True)
class Node:
    """A reference to an existing store node inside a raw graph."""

    id: int


class Violation(NamedTuple):
    node: Hashable
    reason: str

    def __str__(self) -> str:
        return f"{self.node}: {self.reason}"


class IllFormed(ValueError):
    """Raised when a raw graph does not denote a well-formed regular term."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


# A raw graph maps node names to a payload: ``None`` for a leaf, a ``Ref`` for
# an alias, or a sequence of ``(key, target)`` branches.  Targets may also be
# ``Node`` references into the store.
RawGraph = Mapping[Hashable, object]


def check_graph(
    graph: RawGraph,
    root: Hashable,
    describe_duplicate: Callable[[object], str],
) -> list[Violation]:
    """Report structural problems of a raw graph, in breadth-first order of discovery."""
    out: list[Violation] = []
    if root not in graph:
        return [Violation(root, f"undefined node {root}")]
    seen = set()
    order = []
    todo = deque([root])
    while todo:
        n = todo.popleft()
        if n in seen:
            continue
        seen.add(n)
        order.append(n)
        payload = graph[n]
        if payload is None:
            continue
        if isinstance(payload, Ref):
            targets = [payload.target]
        else:
            branches = list(payload)
            if not branches:
                out.append(Violation(n, "empty sum"))
            keys = set()
            for key, _ in branches:
                if key in keys:
                    out.append(Violation(n, describe_duplicate(key)))
                keys.add(key)
            targets = [t for _, t in branches]
        for t in targets:
            if isinstance(t, Node):
                continue
            if t not in graph:
                out.append(Violation(n, f"undefined node {t}"))
            else:
                todo.append(t)
    # Alias chains must end in a leaf or a choice; a cycle of aliases is unproductive.
    for n in order:
        chain = []
        cur = n
        while isinstance(graph.get(cur), Ref) and cur not in chain:
            chain.append(cur)
            cur = graph[cur].target
        if isinstance(graph.get(cur), Ref) and cur == n:
            out.append(Violation(n, "unguarded recursion"))
    return out


def _resolve(graph: RawGraph, n: Hashable) -> Hashable:
    seen = set()
    while not isinstance(n, Node) and isinstance(graph[n], Ref):
        if n in seen:
            raise IllFormed([Violation(n, "unguarded recursion")])
        seen.add(n)
        n = graph[n].target
    return n


class Store:
    """Minimal shared graph of all nodes of one term kind."""

    def __init__(self):
        self.rows: list[tuple[tuple[object, int], ...]] = []
        self.index: dict[tuple, int] = {}
        self.closure: list[frozenset] = []
        self.cyclic: dict[tuple, list[int]] = {}  # key tuple -> ids lying on a cycle
        self.terms: list = []
        self.memo: dict = {}  # free for per-kind caches keyed by node ids

    def _new(self, row: tuple, cp: frozenset) -> int:
        i = len(self.rows)
        self.rows.append(row)
        self.index[row] = i
        self.closure.append(cp)
        self.terms.append(None)
        return i

    def _closure_of(self, row: tuple) -> frozenset:
        acc = set(k for k, _ in row)
        for _, c in row:
            acc |= self.closure[c]
        return frozenset(acc)

    def intern_row(self, row: tuple) -> int:
        """Id of an acyclic node whose children are already stored."""
        i = self.index.get(row)
        if i is None:
            i = self._new(row, self._closure_of(row))
        return i

    def insert(self, rows: Mapping[Hashable, Sequence[tuple[object, Hashable]]], root: Hashable) -> int:
        """Intern the raw graph ``rows`` (targets are raw names or ``Node``) and return the root id."""
        if isinstance(root, Node):
            return root.id
        return self.insert_all(rows, root)[root]

    def insert_all(self, rows: Mapping[Hashable, Sequence[tuple[object, Hashable]]], root: Hashable) -> dict:
        """Like :meth:`insert`, returning the id of every raw node reachable from ``root``."""
        # Reachable raw nodes, then a post-order to spot cycles.
        succ: dict[Hashable, list[Hashable]] = {}
        todo = [root]
        while todo:
            n = todo.pop()
            if n in succ:
                continue
            succ[n] = [t for _, t in rows[n] if not isinstance(t, Node)]
            todo.extend(succ[n])
        order, cyclic = _postorder(root, succ)
        ids: dict[Hashable, int] = {}

        def ref(t) -> int:
            return t.id if isinstance(t, Node) else ids[t]

        if not cyclic:
            for n in order:
                ids[n] = self.intern_row(tuple(sorted(((k, ref(t)) for k, t in rows[n]), key=_first)))
            return ids

        g = nx.DiGraph()
        g.add_nodes_from(succ)
        g.add_edges_from((n, t) for n, ts in succ.items() for t in ts)
        cond = nx.condensation(g)
        for c in reversed(list(nx.topological_sort(cond))):
            members = cond.nodes[c]["members"]
            if len(members) == 1:
                (n,) = members
                if n not in succ[n]:
                    ids[n] = self.intern_row(tuple(sorted(((k, ref(t)) for k, t in rows[n]), key=_first)))
                    continue
            self._insert_cycle(members, rows, ids)
        return ids

    def _insert_cycle(self, members: set, rows, ids: dict) -> None:
        members = sorted(members, key=repr)
        local = {n: i for i, n in enumerate(members)}
        # Branches point either inside the component ("c", local) or outside ("e", id).
        lrows = []
        for n in members:
            branch = []
            for k, t in sorted(rows[n], key=_first):
                if isinstance(t, Node):
                    branch.append((k, ("e", t.id)))
                elif t in local:
                    branch.append((k, ("c", local[t])))
                else:
                    branch.append((k, ("e", ids[t])))
            lrows.append(branch)
        # Moore refinement of the component with external ids fixed.
        sig = [tuple((k, t if t[0] == "e" else None) for k, t in r) for r in lrows]
        block = _renumber(sig)
        count = len(set(block))
        while True:
            sig = [
                (block[i], tuple(t if t[0] == "e" else ("c", block[t[1]]) for _, t in r)) for i, r in enumerate(lrows)
            ]
            nb = _renumber(sig)
            ncount = len(set(nb))
            block = nb
            if ncount == count:
                break
            count = ncount
        rep: dict[int, int] = {}
        for i, b in enumerate(block):
            rep.setdefault(b, i)
        qrows = {b: [(k, t if t[0] == "e" else ("c", block[t[1]])) for k, t in lrows[i]] for b, i in rep.items()}

        # Greatest fixpoint of candidate matches between classes and cyclic store nodes.
        cand: dict[int, set[int]] = {}
        for b, r in qrows.items():
            keys = tuple(k for k, _ in r)
            ok = set()
            for x in self.cyclic.get(keys, ()):
                xr = self.rows[x]
                if all(t[0] == "c" or t[1] == xc for (_, t), (_, xc) in zip(r, xr)):
                    ok.add(x)
            cand[b] = ok
        changed = True
        while changed:
            changed = False
            for b, r in qrows.items():
                for x in list(cand[b]):
                    xr = self.rows[x]
                    if any(t[0] == "c" and xc not in cand[t[1]] for (_, t), (_, xc) in zip(r, xr)):
                        cand[b].discard(x)
                        changed = True
        matched = [bool(c) for c in cand.values()]
        assert all(matched) or not any(matched), "partial match of a strongly connected component"
        if all(matched):
            for n in members:
                (ids[n],) = cand[block[local[n]]]
            return
        # No match: the classes become new store nodes sharing one closure.
        base = len(self.rows)
        new_id = {b: base + j for j, b in enumerate(sorted(qrows))}
        keys_all: set = set()
        ext: set = set()
        for r in qrows.values():
            for k, t in r:
                keys_all.add(k)
                if t[0] == "e":
                    ext |= self.closure[t[1]]
        cp = frozenset(keys_all | ext)
        for b in sorted(qrows):
            row = tuple((k, t[1] if t[0] == "e" else new_id[t[1]]) for k, t in qrows[b])
            i = self._new(row, cp)
            assert i == new_id[b]
            self.cyclic.setdefault(tuple(k for k, _ in row), []).append(i)
        for n in members:
            ids[n] = new_id[block[local[n]]]


def _first(b):
    return b[0]


def _postorder(root, succ) -> tuple[list, bool]:
    """Post-order of the nodes reachable from ``root`` and whether a cycle exists."""
    order = []
    state: dict = {root: 1}
    stack = [(root, iter(succ[root]))]
    cyclic = False
    while stack:
        n, it = stack[-1]
        for t in it:
            s = state.get(t)
            if s is None:
                state[t] = 1
                stack.append((t, iter(succ[t])))
                break
            if s == 1:
                cyclic = True
        else:
            stack.pop()
            state[n] = 2
            order.append(n)
    return order, cyclic


def _renumber(sig: Sequence[Hashable]) -> list[int]:
    ids: dict[Hashable, int] = {}
    return [ids.setdefault(s, len(ids)) for s in sig]


class RegularTerm:
    """Base class of interned regular terms.

    Each subclass owns a :class:`Store`.  Instances are obtained through
    :meth:`from_graph`, :meth:`leaf`, :meth:`choice`, :meth:`sub` or
    :meth:`of_id`; equal trees are the same object.
    """

    __slots__ = ("id", "_local", "_order", "__weakref__")
    store: ClassVar[Store]

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        cls.store = Store()

    @classmethod
    def of_id(cls: type[T], i: int) -> T:
        term = cls.store.terms[i]
        if term is None:
            term = object.__new__(cls)
            term.id = i
            term._local = None
            term._order = None
            cls.store.terms[i] = term
        return term

    # -- construction -------------------------------------------------------

    @classmethod
    def from_graph(cls: type[T], graph: RawGraph, root: Hashable) -> T:
        """Intern the term denoted by ``root`` in ``graph``.

        The graph must be free of violations (see :func:`check_graph`);
        aliases are followed.
        """
        root = _resolve(graph, root)
        rows: dict[Hashable, list] = {}
        todo = [root]
        while todo:
            n = todo.pop()
            if isinstance(n, Node) or n in rows:
                continue
            payload = graph[n]
            row = [(k, _resolve(graph, t)) for k, t in (payload or ())]
            rows[n] = row
            todo.extend(t for _, t in row)
        return cls.of_id(cls.store.insert(rows, root))

    @classmethod
    def from_rows(cls: type[T], rows: Sequence[Sequence[tuple[object, int]]]) -> T:
        """Intern a graph given as rows of ``(key, node index)``, rooted at 0."""
        return cls.of_id(cls.store.insert({i: list(r) for i, r in enumerate(rows)}, 0))

    @classmethod
    def leaf(cls: type[T]) -> T:
        return cls.of_id(cls.store.intern_row(()))

    @classmethod
    def choice(cls: type[T], branches: Iterable[tuple[object, T]]) -> T:
        """The finite sum of ``key.term`` branches (keys must be distinct)."""
        row = sorted(((k, t.id) for k, t in branches), key=_first)
        for a, b in zip(row, row[1:]):
            if a[0] == b[0]:
                raise IllFormed([Violation("root", f"duplicate branch {a[0]}")])
        return cls.of_id(cls.store.intern_row(tuple(row)))

    # -- access -------------------------------------------------------------

    @property
    def row(self) -> tuple[tuple[object, int], ...]:
        """Top-level branches as ``(key, store id)``."""
        return self.store.rows[self.id]

    @property
    def is_leaf(self) -> bool:
        return not self.store.rows[self.id]

    @property
    def branches(self: T) -> tuple[tuple[object, T], ...]:
        of = type(self).of_id
        return tuple((k, of(c)) for k, c in self.store.rows[self.id])

    @property
    def keys(self) -> tuple:
        return tuple(k for k, _ in self.store.rows[self.id])

    def branch(self: T, key) -> T | None:
        for k, c in self.store.rows[self.id]:
            if k == key:
                return type(self).of_id(c)
        return None

    def _view(self) -> None:
        order = {self.id: 0}
        ids = [self.id]
        rows = []
        rows_of = self.store.rows
        k = 0
        while k < len(ids):
            row = []
            for key, c in rows_of[ids[k]]:
                j = order.get(c)
                if j is None:
                    j = order[c] = len(ids)
                    ids.append(c)
                row.append((key, j))
            rows.append(tuple(row))
            k += 1
        self._local = tuple(rows)
        self._order = ids

    @property
    def nodes(self) -> tuple[tuple[tuple[object, int], ...], ...]:
        """Canonical local graph: breadth-first numbering from the root, branches in key order."""
        if self._local is None:
            self._view()
        return self._local

    def node_ids(self) -> list[int]:
        """Store id of each local node."""
        if self._order is None:
            self._view()
        return self._order

    def sub(self: T, i: int) -> T:
        """The subterm rooted at local node ``i``."""
        return type(self).of_id(self.node_ids()[i])

    def all_keys(self) -> frozenset:
        """Every key occurring anywhere in the term."""
        return self.store.closure[self.id]

    def key_closure(self) -> list[frozenset]:
        """For each local node, the set of keys reachable from it (itself included)."""
        cl = self.store.closure
        return [cl[i] for i in self.node_ids()]

    def __len__(self) -> int:
        return len(self.nodes)

    def __lt__(self, other: "RegularTerm") -> bool:
        return self.nodes < other.nodes

    def __repr__(self) -> str:
        return f"{type(self).__name__}<{len(self.nodes)} nodes>"

    def __reduce__(self):
        return (type(self).from_rows, (self.nodes,))


def bisimilar(a: RegularTerm, b: RegularTerm) -> bool:
    """Bisimilarity of two interned terms of the same kind."""
    return type(a) is type(b) and a is b
