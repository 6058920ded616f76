"""Shipped maps and scenarios."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .sim import Scenario, load_scenario

# scenario -> map it runs on
SCENARIOS: dict[str, str] = {
    "follower": "loop",
    "speedlimits": "speedlimits",
    "light": "loop",
    "allway": "allway",
    "merger": "merger",
    "demo5": "merger",
    "demo18": "speedlimits",
    "ring_over": "ring",
    "ring_under": "ring",
    # known failures of the coordination scheme, kept as regression witnesses
    "merger_load": "merger_load",
    "allway_queue": "allway_queue",
}

SUITE = ("follower", "allway", "merger", "speedlimits", "light", "demo5", "demo18")
COUNTEREXAMPLES = ("merger_load", "allway_queue")


def data_path(name: str) -> Path:
    return Path(str(resources.files(__package__).joinpath("data", name)))


def read(name: str) -> str:
    return resources.files(__package__).joinpath("data", name).read_text(encoding="utf-8")


def map_text(name: str) -> str:
    return read(f"{name}.map")


def scenario_text(name: str) -> str:
    return read(f"{name}.scn")


def load(name: str) -> Scenario:
    return load_scenario(map_text(SCENARIOS[name]), scenario_text(name))
