"""Command-line front end: ``modsess COMMAND FILE ...``.

Exit status 0 means a positive verdict, 1 a negative one and 2 a usage,
parse or budget error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .dsl import (
    ParseError,
    SpecFile,
    Verdict,
    emit_verdict,
    export_dot,
    parse_spec,
    print_global_type,
    print_partition,
    print_session_inline,
    trace_text,
)
from .globaltypes import NoTransition, TypeExplosion, gt_step, wf_global
from .lts import BudgetExceeded, TraceError, check_lock_free, reachable_graph, run_trace, sorted_labels
from .modular import check_modularisation, modularisation, sorted_blocks
from .syntax import Label, parse_trace
from .terms import IllFormed
from .typesystem import infer_type, resolve_partition
from .verification import run_all


class UsageError(Exception):
    pass


def _blocks(part) -> str:
    return print_partition(sorted(sorted(b) for b in sorted_blocks(part)))


def _partition(spec: SpecFile, session, name: str | None):
    """A named partition, or the policy name passed through."""
    if name is None or name in ("minimal", "coarse"):
        return name or "minimal"
    try:
        return spec.partition(name)
    except KeyError as e:
        raise UsageError(e.args[0]) from None


def _session(spec: SpecFile, name: str):
    try:
        return spec.session(name)
    except KeyError as e:
        raise UsageError(e.args[0]) from None


def _label(text: str) -> Label:
    try:
        return Label.parse(text)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_check(spec: SpecFile, args) -> Verdict:
    def names(d):
        return ", ".join(sorted(d)) or "none"

    detail = {
        "processes": len(spec.processes),
        "sessions": names(spec.sessions),
        "partitions": names(spec.partitions),
        "global_types": names(spec.global_types),
    }
    return Verdict("check", args.file, "ok", detail)


def cmd_simulate(spec: SpecFile, args) -> Verdict:
    m = _session(spec, args.session)
    try:
        trace = parse_trace(args.trace) if args.trace else ()
    except ValueError as e:
        raise UsageError(f"malformed trace: {e}") from None
    try:
        end = run_trace(m, trace)
    except TraceError as e:
        done = trace[: e.index]
        return Verdict(
            "simulate", args.session, "fail", {"reason": f"label {e.label} is not enabled"},
            {"trace": trace_text(done), "label": str(e.label), "state": print_session_inline(e.state)},
        )
    detail = {
        "steps": len(trace),
        "state": print_session_inline(end),
        "enabled": ", ".join(map(str, sorted_labels(end))),
    }
    return Verdict("simulate", args.session, "ok", detail)


def cmd_modularise(spec: SpecFile, args) -> Verdict:
    m = _session(spec, args.session)
    try:
        part = resolve_partition(m, _partition(spec, m, args.partition))
        bad = check_modularisation(m, part)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if bad:
        v = bad[0]
        return Verdict(
            "modularise", args.session, "not-modularisable",
            {"partition": _blocks(part), "reason": str(v)},
            {"trace": trace_text(()), "participant": v.participant, "partner": v.partner},
        )
    connectors = sorted(p for mod in modularisation(m, part) for p in mod.connectors)
    return Verdict("modularise", args.session, "modularisable",
                   {"partition": _blocks(part), "connectors": ", ".join(connectors)})


def cmd_typecheck(spec: SpecFile, args) -> Verdict:
    m = _session(spec, args.session)
    part = _partition(spec, m, args.partition)
    try:
        v = infer_type(m, part, budget=args.state_budget)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if v.typable:
        detail = {"partition": _blocks(v.partition), "type": print_global_type(v.type), "states": v.states_explored}
        return Verdict("typecheck", args.session, "typable", detail)
    detail = {"partition": _blocks(v.partition), "reason": v.reason}
    if v.detail:
        detail["explanation"] = v.detail
    cex = {"trace": trace_text(v.trace or ()), "state": print_session_inline(v.state)}
    if v.participant is not None:
        cex["participant"] = v.participant
    return Verdict("typecheck", args.session, "untypable", detail, cex)


def cmd_lockfree(spec: SpecFile, args) -> Verdict:
    m = _session(spec, args.session)
    g = reachable_graph(m, args.state_budget)
    rep = check_lock_free(g)
    detail = {"states": len(g.states), "edges": len(g.edges)}
    if rep.verdict:
        return Verdict("lockfree", args.session, "lock-free", detail)
    detail["reason"] = f"{rep.participant} can never communicate again"
    cex = {"trace": trace_text(rep.trace), "participant": rep.participant, "state": print_session_inline(rep.state)}
    return Verdict("lockfree", args.session, "locked", detail, cex)


def cmd_gt_step(spec: SpecFile, args) -> Verdict:
    try:
        g = spec.global_type(args.gtype)
    except KeyError as e:
        raise UsageError(e.args[0]) from None
    labels = [_label(t) for t in args.labels]
    done = []
    for lab in labels:
        try:
            g = gt_step(g, lab, args.node_budget)
        except NoTransition as e:
            return Verdict("gt-step", args.gtype, "fail", {"reason": f"no transition: {e}"},
                           {"trace": trace_text(done), "label": str(lab)})
        done.append(lab)
    return Verdict("gt-step", args.gtype, "ok", {"steps": len(done), "type": print_global_type(g)})


def cmd_meta(spec: SpecFile, args) -> Verdict:
    m = _session(spec, args.session)
    part = _partition(spec, m, args.partition)
    reports = run_all(m, part, subject=args.session, budget=args.state_budget)
    detail = {r.theorem: ("pass" if r.passed else "fail") + f" ({r.states} states, {r.edges} edges, {r.mode})"
              for r in reports}
    failed = [r for r in reports if not r.passed]
    if not failed:
        return Verdict("meta", args.session, "pass", detail)
    r = failed[0]
    cex = {"theorem": r.theorem, "trace": trace_text(r.trace or ()), "explanation": r.explanation}
    if r.label is not None:
        cex["label"] = str(r.label)
    if r.state is not None:
        cex["state"] = print_session_inline(r.state)
    return Verdict("meta", args.session, "fail", detail, cex)


def cmd_export(spec: SpecFile, args) -> str:
    if args.name in spec.global_types:
        return export_dot(spec.global_types[args.name], args.name)
    m = _session(spec, args.name)
    if args.typed:
        v = infer_type(m, _partition(spec, m, args.partition), budget=args.state_budget)
        if not v.typable:
            raise UsageError(f"{args.name} is untypable: {v.reason}")
        return export_dot(v.type, args.name)
    return export_dot(reachable_graph(m, args.state_budget), args.name)


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "modularise": cmd_modularise,
    "typecheck": cmd_typecheck,
    "lockfree": cmd_lockfree,
    "gt-step": cmd_gt_step,
    "meta": cmd_meta,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modsess", description="Modular multiparty sessions with mixed choice.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("human", "machine"), default="human")
    common.add_argument("--state-budget", type=int, default=None, metavar="N")
    common.add_argument("--node-budget", type=int, default=None, metavar="N")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="parse and check well-formedness")
    p.add_argument("file")
    p = sub.add_parser("simulate", parents=[common], help="run a trace from a session")
    p.add_argument("file")
    p.add_argument("session")
    p.add_argument("--trace", default="", help='labels separated by ";" or "·"')
    for name, what in (("modularise", "check or compute a modularising partition"),
                       ("typecheck", "infer a global type"),
                       ("meta", "run the metatheory checks")):
        p = sub.add_parser(name, parents=[common], help=what)
        p.add_argument("file")
        p.add_argument("session")
        p.add_argument("--partition", default=None, help="partition name, minimal or coarse")
    p = sub.add_parser("lockfree", parents=[common], help="decide lock freedom")
    p.add_argument("file")
    p.add_argument("session")
    p = sub.add_parser("gt-step", parents=[common], help="fire labels from a global type")
    p.add_argument("file")
    p.add_argument("gtype")
    p.add_argument("labels", nargs="+", metavar="LABEL")
    p = sub.add_parser("export", parents=[common], help="DOT for a session graph or a global type")
    p.add_argument("file")
    p.add_argument("name")
    p.add_argument("--typed", action="store_true", help="export the inferred type of the session")
    p.add_argument("--partition", default=None)
    p.add_argument("-o", "--output", default=None)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    try:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        spec = parse_spec(text)
        for name, g in spec.global_types.items():
            if wf_global(g):
                raise UsageError(f"global type {name} is ill-formed")
        if args.command == "export":
            dot = cmd_export(spec, args)
            if args.output:
                with open(args.output, "w", encoding="utf-8") as fh:
                    fh.write(dot)
            else:
                sys.stdout.write(dot)
            return 0
        verdict = COMMANDS[args.command](spec, args)
    except (ParseError, IllFormed) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (BudgetExceeded, TypeExplosion) as e:
        print(f"error: budget exceeded: {e}", file=sys.stderr)
        return 2
    print(emit_verdict(verdict, args.format))
    return 0 if verdict.positive else 1


if __name__ == "__main__":
    sys.exit(main())
