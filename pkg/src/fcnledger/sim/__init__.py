"""Deterministic coalition simulator."""

from fcnledger.sim.audit import AuditReport, Discrepancy, audit_trace
from fcnledger.sim.scenario import EventKind, ScenarioEvent, load_script, parse_script
from fcnledger.sim.simulator import (
    EventOutcome,
    NodeStatus,
    SimNode,
    SimulationTrace,
    Simulator,
    run_scenario,
)

__all__ = [
    "AuditReport",
    "Discrepancy",
    "EventKind",
    "EventOutcome",
    "NodeStatus",
    "ScenarioEvent",
    "SimNode",
    "SimulationTrace",
    "Simulator",
    "audit_trace",
    "load_script",
    "parse_script",
    "run_scenario",
]
