"""Deterministic discrete-event simulation of the whole unit plus the
invariant checker that turns the design's quantitative claims into assertions."""

from .scenario import Scenario, load_scenario
from .runner import run, RunArtifacts, verify_replay
from .tracefile import Trace
from .checker import (
    Report,
    check,
    compare_fault_equivalence,
    compare_seasonal,
    sync_convergence,
)

__all__ = [
    "Scenario",
    "load_scenario",
    "run",
    "RunArtifacts",
    "verify_replay",
    "Trace",
    "Report",
    "check",
    "compare_fault_equivalence",
    "compare_seasonal",
    "sync_convergence",
]
