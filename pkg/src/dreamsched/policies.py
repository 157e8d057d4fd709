"""Policy registry: canonical names to scheduler factories."""

from __future__ import annotations

from typing import Optional

from .baselines import EdfScheduler, FcfsScheduler, LayerBlockScheduler
from .scheduler import DreamScheduler, DropConfig, MapScoreParams
from .sim import SchedulerPolicy

POLICY_NAMES = ("fcfs", "edf", "layerblock",
                "dream-mapscore", "dream-smartdrop", "dream-full")


def make_policy(name: str, *, alpha: float = 1.0, beta: float = 1.0,
                theta_ms: float = 1.0,
                drop_config: Optional[DropConfig] = None,
                record_breakdown: bool = True) -> SchedulerPolicy:
    params = MapScoreParams(alpha=alpha, beta=beta)
    if name == "fcfs":
        return FcfsScheduler()
    if name == "edf":
        return EdfScheduler()
    if name == "layerblock":
        return LayerBlockScheduler(theta_ms=theta_ms)
    if name == "dream-mapscore":
        return DreamScheduler(params, record_breakdown=record_breakdown)
    if name == "dream-smartdrop":
        return DreamScheduler(params, drop_config=drop_config or DropConfig(),
                              record_breakdown=record_breakdown)
    if name == "dream-full":
        return DreamScheduler(params, drop_config=drop_config or DropConfig(),
                              supernet=True, record_breakdown=record_breakdown)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
