"""Modular synchronous multiparty sessions with mixed choice."""

from .globaltypes import END, GlobalType, capabilities, gt_enabled, gt_equal, gt_step, plays_global, wf_global
from .lts import check_lock_free, enabled_labels, reachable_graph, run_trace, step
from .modular import check_modularisation, is_connecting, is_connector, minimal_partition, p_partition, refines
from .syntax import EMPTY, NIL, Label, Process, Session, canonical_session, parse_trace
from .typesystem import check_output_viability, check_safety, check_typing, coherent_set, infer_type

__all__ = [
    "END",
    "EMPTY",
    "NIL",
    "GlobalType",
    "Label",
    "Process",
    "Session",
    "canonical_session",
    "capabilities",
    "check_lock_free",
    "check_modularisation",
    "check_output_viability",
    "check_safety",
    "check_typing",
    "coherent_set",
    "enabled_labels",
    "gt_enabled",
    "gt_equal",
    "gt_step",
    "infer_type",
    "is_connecting",
    "is_connector",
    "minimal_partition",
    "p_partition",
    "parse_trace",
    "plays_global",
    "reachable_graph",
    "refines",
    "run_trace",
    "step",
    "wf_global",
]
