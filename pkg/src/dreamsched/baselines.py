"""Baseline schedulers for comparison runs.

All three dispatch greedily whenever accelerators are idle, never drop frames,
and never switch network variants. They differ in granularity: FCFS commits a
whole model to one accelerator, EDF reassigns per layer, and the layer-block
policy groups layers into blocks that run uninterrupted on one accelerator.
"""

from __future__ import annotations

import logging
from typing import Optional

from .sim import SchedulerPolicy, Simulation
from .workload import InferenceTask, ModelSpec

log = logging.getLogger(__name__)


class FcfsScheduler(SchedulerPolicy):
    """Oldest waiting request first; the whole remaining model runs back-to-back
    on the lowest-numbered idle accelerator."""

    name = "fcfs"

    def on_trigger(self, sim: Simulation) -> None:
        while True:
            idle = sim.idle_accelerators()
            waiting = sim.waiting_tasks()
            if not idle or not waiting:
                return
            task = min(waiting, key=lambda t: (t.arrival_time, t.task_id))
            acc = idle[0].accelerator_id
            sim.dispatch(task, acc, chain_layers=len(task.remaining_layers) - 1)


class EdfScheduler(SchedulerPolicy):
    """Earliest deadline first at layer granularity; each layer goes to the idle
    accelerator that runs it fastest."""

    name = "edf"

    def on_trigger(self, sim: Simulation) -> None:
        while True:
            idle = sim.idle_accelerators()
            waiting = sim.waiting_tasks()
            if not idle or not waiting:
                return
            task = min(waiting, key=lambda t: (t.deadline, t.task_id))
            lats = sim.layer_latencies(task.model_id, task.next_layer_id())
            acc = min(idle, key=lambda a: (lats[a.accelerator_id], a.accelerator_id))
            sim.dispatch(task, acc.accelerator_id)


def build_blocks(model: ModelSpec, sim: Simulation, theta_ms: float) -> list[int]:
    """Partition a model's layers into contiguous blocks: extend the current
    block until its cumulative across-accelerator-average latency reaches
    theta, then close it. Returns the block length per block, covering every
    layer exactly once."""
    if theta_ms <= 0:
        raise ValueError("theta_ms must be > 0")
    blocks: list[int] = []
    size = 0
    acc_ms = 0.0
    for layer in model.layers:
        size += 1
        acc_ms += sim.layer_latency_sum(model.model_id, layer.layer_id) / sim.n_acc
        if acc_ms >= theta_ms:
            blocks.append(size)
            size = 0
            acc_ms = 0.0
    if size:
        blocks.append(size)
    return blocks


class LayerBlockScheduler(SchedulerPolicy):
    """Earliest deadline first over compiler-style layer blocks; a block runs
    uninterrupted on the idle accelerator with the lowest total latency for it."""

    name = "layerblock"

    def __init__(self, theta_ms: float = 1.0):
        self.theta_ms = theta_ms
        self._block_end: dict[str, list[int]] = {}  # model -> end position per layer position

    def bind(self, sim: Simulation) -> None:
        for model in sim.scenario.models:
            ends: list[int] = []
            pos = 0
            for size in build_blocks(model, sim, self.theta_ms):
                ends.extend([pos + size] * size)
                pos += size
            self._block_end[model.model_id] = ends

    def _current_block(self, sim: Simulation, task: InferenceTask) -> list[int]:
        # baselines run the original network, so positions index the full layer list
        end = self._block_end[task.model_id][task.next_pos]
        return list(task.layer_seq[task.next_pos:end])

    def on_trigger(self, sim: Simulation) -> None:
        while True:
            idle = sim.idle_accelerators()
            waiting = sim.waiting_tasks()
            if not idle or not waiting:
                return
            task = min(waiting, key=lambda t: (t.deadline, t.task_id))
            block = self._current_block(sim, task)

            def block_ms(acc_id: int) -> float:
                return sum(sim.layer_latencies(task.model_id, lid)[acc_id] for lid in block)

            acc = min(idle, key=lambda a: (block_ms(a.accelerator_id), a.accelerator_id))
            sim.dispatch(task, acc.accelerator_id, chain_layers=len(block) - 1)
