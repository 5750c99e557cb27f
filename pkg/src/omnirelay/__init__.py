"""Discrete-event simulator of an oracle/relayer cross-chain messaging endpoint."""

from .audit import AuditReport, audit
from .harness import GroundTruth, RunResult, Simulation, run_scenario, simulate
from .scenario import ConfigInvalid, ScenarioConfig, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "ConfigInvalid",
    "GroundTruth",
    "RunResult",
    "ScenarioConfig",
    "Simulation",
    "audit",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "simulate",
]
