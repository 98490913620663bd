"""Cascade-PID platoon control with MPC-tracked cooperative lane changes."""

from .controller import GROUP_1, GROUP_2, CascadeGains, SpacingPolicy
from .dynamics import Limits, VehicleParams
from .scenario import ScenarioSpec, load_preset, load_scenario, parse_scenario
from .sim import CollisionError, SimulationResult, run_scenario, run_sweep, single_pid_baseline

__all__ = [
    "GROUP_1",
    "GROUP_2",
    "CascadeGains",
    "CollisionError",
    "Limits",
    "ScenarioSpec",
    "SimulationResult",
    "SpacingPolicy",
    "VehicleParams",
    "load_preset",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "run_sweep",
    "single_pid_baseline",
]

__version__ = "0.1.0"
