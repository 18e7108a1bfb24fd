"""Text format for processes, sessions, partitions and global types.

Grammar (whitespace-insensitive, ``#`` starts a comment)::

    def       NAME = process
    session   NAME = PTP |> process (, PTP |> process)*
    partition NAME = { {PTP, ...}, ... }
    gdef      NAME = gtype

    process ::= term (+ term)*
    term    ::= 0 | NAME | ( process ) | PTP ! MSG (. term)? | PTP ? MSG (. term)?
    gtype   ::= gterm (+ gterm)*
    gterm   ::= End | NAME | ( gtype ) | PTP -> PTP : MSG (. gterm)?

Prefixing binds tighter than ``+``.  Names tie recursive knots and may be used
before they are defined.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from .globaltypes import GlobalType, describe_dup_label
from .syntax import ActionPrefix, Direction, Label, Process, Session, canonical_session, format_trace
from .terms import IllFormed, Ref, RegularTerm, check_graph

Partition = frozenset  # frozenset[frozenset[str]]


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(f"{where}{message}")


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<op>\|>|->|[!?.+,{}()=:])
  | (?P<id>[A-Za-z_0-9][A-Za-z0-9_']*)
    """,
    re.VERBOSE,
)

KEYWORDS = {"def", "session", "partition", "gdef"}


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind != "ws":
            toks.append(Tok(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - start + 1))
    return toks


@dataclass
class SpecFile:
    processes: dict[str, Process] = field(default_factory=dict)
    sessions: dict[str, Session] = field(default_factory=dict)
    partitions: dict[str, Partition] = field(default_factory=dict)
    global_types: dict[str, GlobalType] = field(default_factory=dict)

    def session(self, name: str) -> Session:
        try:
            return self.sessions[name]
        except KeyError:
            raise KeyError(f"unknown session {name}") from None

    def partition(self, name: str) -> Partition:
        try:
            return self.partitions[name]
        except KeyError:
            raise KeyError(f"unknown partition {name}") from None

    def global_type(self, name: str) -> GlobalType:
        try:
            return self.global_types[name]
        except KeyError:
            raise KeyError(f"unknown global type {name}") from None


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.pgraph: dict[Hashable, object] = {}
        self.ggraph: dict[Hashable, object] = {}
        self.pdefs: dict[str, Tok] = {}
        self.gdefs: dict[str, Tok] = {}
        self.prefs: list[Tok] = []
        self.grefs: list[Tok] = []
        self.sessions: dict[str, tuple[Tok, list[tuple[Tok, Hashable]]]] = {}
        self.partitions: dict[str, Partition] = {}
        self.fresh = 0

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Tok | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def expect(self, text: str) -> Tok:
        if self.tok.text != text:
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str) -> Tok:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error(f"expected {what}, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def node(self, graph: dict, payload) -> Hashable:
        self.fresh += 1
        n = ("_", self.fresh)
        graph[n] = payload
        return n

    # -- top level ----------------------------------------------------------

    def parse(self) -> None:
        while self.tok.kind != "eof":
            kw = self.tok.text
            if kw == "def":
                self.i += 1
                name = self.ident("definition name")
                self._define(self.pdefs, name)
                self.expect("=")
                self.pgraph[("def", name.text)] = Ref(self.process())
            elif kw == "gdef":
                self.i += 1
                name = self.ident("global type name")
                self._define(self.gdefs, name)
                self.expect("=")
                self.ggraph[("def", name.text)] = Ref(self.gtype())
            elif kw == "session":
                self.i += 1
                name = self.ident("session name")
                if name.text in self.sessions:
                    self.error(f"duplicate session {name.text}", name)
                self.expect("=")
                entries = []
                while True:
                    ptp = self.ident("participant")
                    self.expect("|>")
                    entries.append((ptp, self.process()))
                    if self.tok.text != ",":
                        break
                    self.i += 1
                self.sessions[name.text] = (name, entries)
            elif kw == "partition":
                self.i += 1
                name = self.ident("partition name")
                if name.text in self.partitions:
                    self.error(f"duplicate partition {name.text}", name)
                self.expect("=")
                self.partitions[name.text] = self.partition()
            else:
                self.error(f"expected a declaration, found {kw or 'end of input'!r}")

    def _define(self, table: dict, name: Tok) -> None:
        if name.text in table:
            self.error(f"duplicate definition {name.text}", name)
        table[name.text] = name

    def partition(self) -> Partition:
        self.expect("{")
        blocks = []
        seen: set[str] = set()
        if self.tok.text == "}":
            self.i += 1
            return frozenset()
        while True:
            self.expect("{")
            block = []
            while True:
                p = self.ident("participant")
                if p.text in seen:
                    self.error(f"participant {p.text} occurs in two blocks", p)
                seen.add(p.text)
                block.append(p.text)
                if self.tok.text != ",":
                    break
                self.i += 1
            self.expect("}")
            blocks.append(frozenset(block))
            if self.tok.text != ",":
                break
            self.i += 1
        self.expect("}")
        return frozenset(blocks)

    # -- processes ----------------------------------------------------------

    def process(self) -> Hashable:
        first = self.tok
        terms = [self.pterm()]
        while self.tok.text == "+":
            self.i += 1
            terms.append(self.pterm())
        if len(terms) == 1:
            return terms[0]
        branches = []
        for t in terms:
            payload = self.pgraph[t]
            if payload is None or isinstance(payload, Ref):
                self.error("every summand must start with an action prefix", first)
            branches.extend(payload)
        return self.node(self.pgraph, branches)

    def pterm(self) -> Hashable:
        t = self.tok
        if t.text == "0":
            self.i += 1
            return self.node(self.pgraph, None)
        if t.text == "(":
            self.i += 1
            n = self.process()
            self.expect(")")
            return n
        if t.kind == "id" and self.peek().text in ("!", "?"):
            ptp = self.ident("participant")
            d = Direction.OUTPUT if self.tok.text == "!" else Direction.INPUT
            self.i += 1
            msg = self.ident("message")
            if self.tok.text == ".":
                self.i += 1
                cont = self.pterm()
            else:
                cont = self.node(self.pgraph, None)
            return self.node(self.pgraph, [(ActionPrefix(ptp.text, d, msg.text), cont)])
        if t.kind == "id" and t.text not in KEYWORDS:
            self.i += 1
            self.prefs.append(t)
            return self.node(self.pgraph, Ref(("def", t.text)))
        self.error(f"expected a process, found {t.text or 'end of input'!r}")

    # -- global types -------------------------------------------------------

    def gtype(self) -> Hashable:
        first = self.tok
        terms = [self.gterm()]
        while self.tok.text == "+":
            self.i += 1
            terms.append(self.gterm())
        if len(terms) == 1:
            return terms[0]
        branches = []
        for t in terms:
            payload = self.ggraph[t]
            if payload is None or isinstance(payload, Ref):
                self.error("every summand must start with a communication", first)
            branches.extend(payload)
        return self.node(self.ggraph, branches)

    def gterm(self) -> Hashable:
        t = self.tok
        if t.text == "End":
            self.i += 1
            return self.node(self.ggraph, None)
        if t.text == "(":
            self.i += 1
            n = self.gtype()
            self.expect(")")
            return n
        if t.kind == "id" and self.peek().text == "->":
            p = self.ident("participant")
            self.expect("->")
            q = self.ident("participant")
            if q.text == p.text:
                self.error(f"sender and receiver coincide in {p.text}->{q.text}", p)
            self.expect(":")
            msg = self.ident("message")
            if self.tok.text == ".":
                self.i += 1
                cont = self.gterm()
            else:
                cont = self.node(self.ggraph, None)
            return self.node(self.ggraph, [(Label(p.text, msg.text, q.text), cont)])
        if t.kind == "id" and t.text not in KEYWORDS:
            self.i += 1
            self.grefs.append(t)
            return self.node(self.ggraph, Ref(("def", t.text)))
        self.error(f"expected a global type, found {t.text or 'end of input'!r}")

    # -- resolution ---------------------------------------------------------

    def finish(self) -> SpecFile:
        for ref in self.prefs:
            if ref.text not in self.pdefs:
                self.error(f"undefined name {ref.text}", ref)
        for ref in self.grefs:
            if ref.text not in self.gdefs:
                self.error(f"undefined name {ref.text}", ref)
        spec = SpecFile(partitions=dict(self.partitions))
        for name, tok in self.pdefs.items():
            spec.processes[name] = self._build(Process, self.pgraph, ("def", name), tok, _dup_prefix)
        for name, tok in self.gdefs.items():
            spec.global_types[name] = self._build(GlobalType, self.ggraph, ("def", name), tok, describe_dup_label)
        for name, (tok, entries) in self.sessions.items():
            raw = []
            for ptp, n in entries:
                raw.append((ptp.text, self._build(Process, self.pgraph, n, ptp, _dup_prefix)))
            dup = [p for p, c in Counter(p for p, _ in raw).items() if c > 1]
            if dup:
                self.error(f"duplicate participant {dup[0]} in session {name}", tok)
            spec.sessions[name] = canonical_session(raw)
        return spec

    def _build(self, cls: type[RegularTerm], graph, root, tok: Tok, dup) -> RegularTerm:
        violations = check_graph(graph, root, dup)
        if violations:
            self.error(violations[0].reason, tok)
        return cls.from_graph(graph, root)


def _dup_prefix(key: ActionPrefix) -> str:
    kind = "input" if key.direction is Direction.INPUT else "output"
    return f"duplicate {kind} branch {key}"


def parse_spec(text: str) -> SpecFile:
    p = _Parser(text)
    p.parse()
    return p.finish()


def parse_process(text: str, defs: str = "") -> Process:
    """Parse a single process expression, optionally against extra definitions."""
    spec = parse_spec(f"{defs}\ndef __it__ = {text}")
    return spec.processes["__it__"]


def parse_global_type(text: str, defs: str = "") -> GlobalType:
    spec = parse_spec(f"{defs}\ngdef __it__ = {text}")
    return spec.global_types["__it__"]


def parse_partition(text: str) -> Partition:
    return parse_spec(f"partition __it__ = {text}").partitions["__it__"]


# -- printing ---------------------------------------------------------------


def _named_nodes(term: RegularTerm) -> list[int]:
    indeg = Counter(t for row in term.nodes for _, t in row)
    return [i for i, row in enumerate(term.nodes) if i == 0 or (row and indeg[i] >= 2)]


def _render(term: RegularTerm, names: Mapping[int, str], leaf: str, key_text, top: int) -> str:
    def node(i: int, as_cont: bool) -> str:
        row = term.nodes[i]
        if not row:
            return leaf
        if as_cont and i in names:
            return names[i]
        parts = []
        for k, t in row:
            if term.nodes[t]:
                parts.append(f"{key_text(k)}.{node(t, True)}")
            else:
                parts.append(key_text(k))
        body = " + ".join(parts)
        return f"({body})" if as_cont and len(row) > 1 else body

    return node(top, False)


def _print_defs(term: RegularTerm, name: str, kw: str, leaf: str, key_text) -> str:
    named = _named_nodes(term)
    names = {i: (name if i == 0 else f"{name}_{n}") for n, i in enumerate(named)}
    return "\n".join(f"{kw} {names[i]} = {_render(term, names, leaf, key_text, i)}" for i in named)


def _gkey(lab: Label) -> str:
    return f"{lab.sender}->{lab.receiver}:{lab.message}"


def print_process(p: Process, name: str = "P") -> str:
    """Definitions ``def name = ...`` that re-parse to a bisimilar process."""
    return _print_defs(p, name, "def", "0", str)


def print_global_type(g: GlobalType, name: str = "G") -> str:
    return _print_defs(g, name, "gdef", "End", _gkey)


def print_process_inline(p: Process) -> str:
    """A one-line rendering; cyclic nodes are shown as ``rec X.(...)``."""
    return _inline(p, "0", str)


def print_global_type_inline(g: GlobalType) -> str:
    return _inline(g, "End", _gkey)


def _inline(term: RegularTerm, leaf: str, key_text) -> str:
    def go(i: int, stack: dict[int, str], as_cont: bool) -> str:
        row = term.nodes[i]
        if not row:
            return leaf
        if i in stack:
            return stack[i]
        var = f"X{i}"
        stack = {**stack, i: var}
        parts = []
        for k, t in row:
            parts.append(f"{key_text(k)}.{go(t, stack, True)}" if term.nodes[t] else key_text(k))
        body = " + ".join(parts)
        cyclic = any(var in part for part in parts)
        if cyclic:
            return f"rec {var}.({body})"
        return f"({body})" if as_cont and len(row) > 1 else body

    return go(0, {}, False)


def print_session_inline(m: Session) -> str:
    if m.is_empty:
        return "empty"
    return "{" + ", ".join(f"{p}|>{print_process_inline(P)}" for p, P in m) + "}"


def print_session(m: Session, name: str = "S") -> str:
    """Definitions plus a ``session`` line that re-parse to the same session."""
    if m.is_empty:
        raise ValueError("the empty session has no textual form")
    lines = []
    entries = []
    for p, P in m:
        defs = print_process(P, f"{name}_{p}")
        lines.append(defs)
        entries.append(f"{p} |> {name}_{p}")
    lines.append(f"session {name} = " + ", ".join(entries))
    return "\n".join(lines)


def print_partition(part: Iterable[Iterable[str]]) -> str:
    blocks = sorted(sorted(b) for b in part)
    return "{" + ", ".join("{" + ", ".join(b) + "}" for b in blocks) + "}"


# -- graph export -----------------------------------------------------------


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(graph, name: str = "G") -> str:
    """DOT text for a session reachability graph or a global type."""
    from .lts import SessionGraph

    lines = [f'digraph "{_dot_escape(name)}" {{']
    if isinstance(graph, SessionGraph):
        for i, st in enumerate(graph.states):
            shape = "doublecircle" if st.is_empty else "box"
            lines.append(f'  s{i} [shape={shape}, label="{_dot_escape(print_session_inline(st))}"];')
        for s, lab, t in graph.edges:
            lines.append(f'  s{s} -> s{t} [label="{_dot_escape(str(lab))}"];')
    elif isinstance(graph, GlobalType):
        for i, row in enumerate(graph.nodes):
            label = "End" if not row else f"n{i}"
            lines.append(f'  n{i} [label="{label}"];')
        for i, row in enumerate(graph.nodes):
            for lab, t in row:
                lines.append(f'  n{i} -> n{t} [label="{_dot_escape(str(lab))}"];')
    else:
        raise TypeError(f"cannot export {type(graph).__name__}")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- verdicts -----------------------------------------------------------------

NEGATIVE = {"fail", "untypable", "locked", "unsafe", "not-modularisable"}


@dataclass
class Verdict:
    command: str
    subject: str
    result: str
    detail: dict = field(default_factory=dict)
    counterexample: dict | None = None

    def __post_init__(self):
        if self.result in NEGATIVE and not self.detail:
            raise ValueError(f"a {self.result} verdict needs a detail")

    @property
    def positive(self) -> bool:
        return self.result not in NEGATIVE

    def record(self) -> dict:
        rec = {"command": self.command, "subject": self.subject, "result": self.result, "detail": self.detail}
        if self.counterexample is not None:
            rec["counterexample"] = self.counterexample
        return rec


def emit_verdict(v: Verdict, format: str = "human") -> str:
    if format == "machine":
        return json.dumps(v.record(), sort_keys=True, ensure_ascii=False)
    if format != "human":
        raise ValueError(f"unknown format {format}")
    lines = [f"{v.command} {v.subject}: {v.result}"]
    for k in sorted(v.detail):
        lines.append(f"  {k}: {v.detail[k]}")
    if v.counterexample:
        for k in sorted(v.counterexample):
            lines.append(f"  counterexample.{k}: {v.counterexample[k]}")
    return "\n".join(lines)


def trace_text(trace: Sequence[Label]) -> str:
    return format_trace(trace)
