"""Processes, labels and sessions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Hashable, Iterable, Iterator, Mapping, NamedTuple, Sequence

from .terms import IllFormed, RawGraph, Ref, RegularTerm, Violation, check_graph

Participant = str
Message = str


class Direction(IntEnum):
    INPUT = 0
    OUTPUT = 1

    @property
    def symbol(self) -> str:
        return "?" if self is Direction.INPUT else "!"


class ActionPrefix(NamedTuple):
    partner: Participant
    direction: Direction
    message: Message

    def __str__(self) -> str:
        return f"{self.partner}{self.direction.symbol}{self.message}"


def inp(partner: Participant, message: Message) -> ActionPrefix:
    return ActionPrefix(partner, Direction.INPUT, message)


def out(partner: Participant, message: Message) -> ActionPrefix:
    return ActionPrefix(partner, Direction.OUTPUT, message)


_LABEL_PLAYS: dict = {}


class Label(NamedTuple):
    """A communication ``sender -message-> receiver``."""

    sender: Participant
    message: Message
    receiver: Participant

    @property
    def participants(self) -> frozenset[Participant]:
        got = _LABEL_PLAYS.get(self)
        if got is None:
            got = _LABEL_PLAYS[self] = frozenset((self.sender, self.receiver))
        return got

    def __str__(self) -> str:
        return f"{self.sender}-{self.message}->{self.receiver}"

    @classmethod
    def parse(cls, text: str) -> "Label":
        text = text.strip()
        try:
            sender, rest = text.split("-", 1)
            message, receiver = rest.split("->", 1)
        except ValueError:
            raise ValueError(f"malformed label {text!r}, expected p-msg->q") from None
        sender, message, receiver = sender.strip(), message.strip(), receiver.strip()
        if not (sender and message and receiver):
            raise ValueError(f"malformed label {text!r}, expected p-msg->q")
        if sender == receiver:
            raise ValueError(f"label {text!r} has equal sender and receiver")
        return cls(sender, message, receiver)


Trace = tuple[Label, ...]


def parse_trace(text: str) -> Trace:
    """Parse ``"a-l->b · c-m->d"`` (``·`` or ``;`` separated) into a trace."""
    parts = [p for p in text.replace("·", ";").split(";") if p.strip()]
    return tuple(Label.parse(p) for p in parts)


def format_trace(trace: Sequence[Label]) -> str:
    return " · ".join(map(str, trace)) if trace else "ε"


class Process(RegularTerm):
    """A canonical regular mixed-choice process; the leaf is ``0``."""

    __slots__ = ("_io", "_partners")

    @property
    def partners(self) -> frozenset[Participant]:
        """Participants occurring anywhere in the process."""
        try:
            return self._partners
        except AttributeError:
            self._partners = frozenset(k.partner for k in self.all_keys())
            return self._partners

    def io(self) -> tuple[dict, dict]:
        """Top-level outputs and inputs as ``{(partner, msg): continuation}``."""
        try:
            return self._io
        except AttributeError:
            outs, ins = {}, {}
            for k, t in self.branches:
                (outs if k.direction is Direction.OUTPUT else ins)[(k.partner, k.message)] = t
            self._io = (outs, ins)
            return self._io


NIL = Process.leaf()


def prefix(pi: ActionPrefix, cont: Process = NIL) -> Process:
    return Process.choice([(pi, cont)])


def psum(*branches: tuple[ActionPrefix, Process]) -> Process:
    return Process.choice(branches)


@dataclass(frozen=True)
class ProcessGraph:
    """A raw process graph: node payloads are ``None`` (0), a ``Ref`` alias, or branches."""

    nodes: RawGraph
    root: Hashable

    def build(self) -> Process:
        violations = wf_process(self)
        if violations:
            raise IllFormed(violations)
        return Process.from_graph(self.nodes, self.root)


def _describe_dup(key: ActionPrefix) -> str:
    kind = "input" if key.direction is Direction.INPUT else "output"
    return f"duplicate {kind} branch {key}"


def wf_process(p: ProcessGraph | Process) -> list[Violation]:
    """Well-formedness report of a process graph; empty means well formed."""
    if isinstance(p, Process):
        return []
    return check_graph(p.nodes, p.root, _describe_dup)


def plays_process(p: Process) -> frozenset[Participant]:
    return p.partners


class Session:
    """A multiparty session in canonical form: no ``0`` entries, sorted by participant."""

    __slots__ = ("entries", "_map", "_hash", "_pos")

    def __init__(self, entries: tuple[tuple[Participant, Process], ...]):
        self.entries = entries
        self._map = dict(entries)
        self._hash = hash(entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Session) and self._hash == other._hash and self.entries == other.entries

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "Session") -> bool:
        return self.sort_key() < other.sort_key()

    def sort_key(self):
        return tuple((p, P.nodes) for p, P in self.entries)

    def __iter__(self) -> Iterator[tuple[Participant, Process]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, p: Participant) -> bool:
        return p in self._map

    def __getitem__(self, p: Participant) -> Process:
        return self._map.get(p, NIL)

    @property
    def participants(self) -> tuple[Participant, ...]:
        return tuple(p for p, _ in self.entries)

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def replace(self, updates: Mapping[Participant, Process]) -> "Session":
        m = dict(self._map)
        m.update(updates)
        return canonical_session(m.items())

    def advance(self, updates: Mapping[Participant, Process]) -> "Session":
        """``replace`` for participants already present; keeps the sorted order."""
        try:
            pos = self._pos
        except AttributeError:
            pos = self._pos = {p: i for i, (p, _) in enumerate(self.entries)}
        entries = list(self.entries)
        drop = []
        for p, P in updates.items():
            i = pos[p]
            entries[i] = (p, P)
            if P.is_leaf:
                drop.append(i)
        for i in sorted(drop, reverse=True):
            del entries[i]
        return Session(tuple(entries))

    def restrict(self, ptps: Iterable[Participant]) -> "Session":
        keep = set(ptps)
        return Session(tuple(e for e in self.entries if e[0] in keep))

    def __repr__(self) -> str:
        from .dsl import print_session_inline

        return f"Session({print_session_inline(self)})"


EMPTY = Session(())


def canonical_session(raw: Iterable[tuple[Participant, Process]] | Mapping[Participant, Process]) -> Session:
    """Quotient by structural congruence: drop ``p ▷ 0`` and sort entries."""
    if isinstance(raw, Mapping):
        raw = raw.items()
    seen: dict[Participant, Process] = {}
    for p, P in raw:
        if p in seen:
            raise ValueError(f"duplicate participant {p}")
        seen[p] = P
    return Session(tuple(sorted((p, P) for p, P in seen.items() if not P.is_leaf)))


def plays_session(m: Session) -> frozenset[Participant]:
    return frozenset(m.participants)


def plays_label(lab: Label) -> frozenset[Participant]:
    return lab.participants


def plays_trace(trace: Iterable[Label]) -> frozenset[Participant]:
    acc: set[Participant] = set()
    for lab in trace:
        acc.update((lab.sender, lab.receiver))
    return frozenset(acc)


def process_equal(p: Process, q: Process) -> bool:
    """Bisimilarity; canonical interning reduces it to identity."""
    return p is q
