"""Shipped scenario and system configuration corpus."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..hardware import SystemSpec, load_system
from ..workload import ScenarioSpec, load_scenario


def _dir(kind: str) -> Path:
    return Path(resources.files(__package__) / kind)


def scenario_path(name: str) -> Path:
    return _dir("scenarios") / f"{name}.yaml"


def system_path(name: str) -> Path:
    return _dir("systems") / f"{name}.yaml"


def shipped_scenario(name: str) -> ScenarioSpec:
    return load_scenario(scenario_path(name))


def shipped_system(name: str) -> SystemSpec:
    return load_system(system_path(name))


def list_scenarios() -> list[str]:
    return sorted(p.stem for p in _dir("scenarios").glob("*.yaml"))


def list_systems() -> list[str]:
    return sorted(p.stem for p in _dir("systems").glob("*.yaml"))
