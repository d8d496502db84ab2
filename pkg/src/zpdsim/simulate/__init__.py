"""Event-driven simulation of attack and legitimate workloads against an implant."""

from ._kernels import default_backend
from .engine import (ComparisonRow, SimReport, Trace, compare_strategies, comparison_csv, report_schema,
                     run, trace_voltage)
from .scenario import (Actor, Credentials, Repeat, RepeatMode, Request, Scenario, ScenarioError,
                       SimOptions, WptConfig, load_scenario, scenario_from_dict, scenario_schema)
from .strategies import DefenseStrategy, StrategyKind

__all__ = [
    "Actor", "ComparisonRow", "Credentials", "DefenseStrategy", "Repeat", "RepeatMode", "Request",
    "Scenario", "ScenarioError", "SimOptions", "SimReport", "StrategyKind", "Trace", "WptConfig",
    "compare_strategies", "comparison_csv", "default_backend", "load_scenario", "report_schema", "run",
    "scenario_from_dict", "scenario_schema", "trace_voltage",
]
