"""Deterministic discrete-event simulator of an autonomous racing stack
with a fault-tolerant safety layer and a fault-injection harness."""
from .harness import RunResult, build_stack, run_scenario
from .predicates import assert_trace
from .scenario import ConfigError, Scenario, load_scenario, scenario_from_dict
from .trace import TraceLog

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "RunResult",
    "Scenario",
    "TraceLog",
    "assert_trace",
    "build_stack",
    "load_scenario",
    "run_scenario",
    "scenario_from_dict",
    "__version__",
]
