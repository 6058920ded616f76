"""Free-space coordination of automated vehicles on metric road maps."""

from . import dynamics, geometry, mapgraph, rules, runtime, sim
from .dynamics import (
    KinematicParams,
    VehicleState,
    braking_distance,
    min_free_space,
    speed_policy,
)
from .mapgraph import MapGraph, Position, parse_map
from .runtime import Allocation, capacity, critical_paths, free_space_policy
from .sim import Scenario, load_scenario, run

__all__ = [
    "Allocation",
    "KinematicParams",
    "MapGraph",
    "Position",
    "Scenario",
    "VehicleState",
    "braking_distance",
    "capacity",
    "critical_paths",
    "dynamics",
    "free_space_policy",
    "geometry",
    "load_scenario",
    "mapgraph",
    "min_free_space",
    "parse_map",
    "rules",
    "run",
    "runtime",
    "sim",
    "speed_policy",
]
