"""Discrete-event simulator for computation offloading in a vehicular
named-data network. Work runs on roadside edges and parked vehicles, with the cloud as fallback."""

from .config import MODES, ConfigError, ScenarioConfig, load_config, parse_config
from .harness import RunReport, compute_csd, run_scenario, sweep
from .metrics import RequestRecord
from .naming import FeName, MalformedName, parse_name, serialize_name
from .network import InvariantViolation, Network

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FeName",
    "InvariantViolation",
    "MODES",
    "MalformedName",
    "Network",
    "RequestRecord",
    "RunReport",
    "ScenarioConfig",
    "compute_csd",
    "load_config",
    "parse_config",
    "parse_name",
    "run_scenario",
    "serialize_name",
    "sweep",
]
