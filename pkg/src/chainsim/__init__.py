"""Deterministic single-process simulator of a DHT-based blockchain."""

from .config import SimulationConfig, malicious_count, parse_config, to_config_text
from .engine import (
    MetricRecord,
    Simulation,
    SimulationReport,
    StalledSimulation,
    run_simulation,
    summarize,
    write_csv,
)
from .identity import Identifier, derive_node_identifier, derive_object_identifier

__all__ = [
    "Identifier",
    "MetricRecord",
    "Simulation",
    "SimulationConfig",
    "SimulationReport",
    "StalledSimulation",
    "derive_node_identifier",
    "derive_object_identifier",
    "malicious_count",
    "parse_config",
    "run_simulation",
    "summarize",
    "to_config_text",
    "write_csv",
]
