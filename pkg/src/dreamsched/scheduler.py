"""Score-driven dynamic scheduler.

Each (waiting task, idle accelerator) pair gets a dispatch score

    urgency * latency_preference + alpha * starvation + beta * energy_score

where urgency is remaining work over slack, latency preference rewards the
accelerator that runs the next layer fastest, starvation grows with queueing
delay, and the energy term prefers the efficient accelerator net of the
context-switch cost of moving in. Two optional engines run before dispatching:
smart frame dropping abandons frames that cannot meet their deadline anyway,
and network-variant switching slims a model mid-run when slack demands it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from .hardware import cswitch_energy, incoming_activation_bytes
from .sim import MapScoreBreakdown, SchedulerPolicy, Simulation
from .workload import WAITING, InferenceTask

log = logging.getLogger(__name__)


@dataclass
class MapScoreParams:
    """Tunable mixing weights; the sensible operating range is [0, 2]."""

    alpha: float = 1.0  # starvation weight
    beta: float = 1.0   # energy weight

    def clamped(self) -> "MapScoreParams":
        return MapScoreParams(alpha=min(2.0, max(0.0, self.alpha)),
                              beta=min(2.0, max(0.0, self.beta)))


@dataclass(frozen=True)
class DropConfig:
    """Sliding-window budget for smart frame dropping (per model, frame-indexed)."""

    max_drops: int = 2
    window_frames: int = 10

    def __post_init__(self):
        if not (0 <= self.max_drops <= self.window_frames):
            raise ValueError("max_drops must lie in [0, window_frames]")
        if self.window_frames <= 0:
            raise ValueError("window_frames must be > 0")


def compute_unit_scores(task: InferenceTask, accelerator_id: int,
                        sim: Simulation) -> tuple[float, float, float]:
    """Urgency, latency-preference, and starvation terms for one pair.

    Urgency: average remaining latency across accelerators over slack (slack is
    floored at a small epsilon once the deadline has passed). Latency
    preference: sum of the next layer's latencies over its latency here, so the
    fastest accelerator scores highest. Starvation: time since the task last
    finished a layer, normalized by the next layer's average latency.
    """
    to_go = sim.to_go_ms(task)
    slack = sim.slack_ms(task)
    urgency = to_go / slack
    next_layer = task.next_layer_id()
    lat_sum = sim.layer_latency_sum(task.model_id, next_layer)
    lat_here = sim.layer_latencies(task.model_id, next_layer)[accelerator_id]
    lat_pref = lat_sum / lat_here
    queue_ms = sim.now - task.last_completion_time
    starvation = queue_ms / (lat_sum / sim.n_acc)
    return urgency, lat_pref, starvation


def compute_energy_score(task: InferenceTask, accelerator_id: int,
                         sim: Simulation) -> tuple[float, float, float]:
    """(preference, switch cost, net score) for the energy term.

    Preference mirrors the latency term on energy. The switch cost is the
    context-switch energy of placing this task after whatever ran on the
    accelerator last, normalized by the next layer's energy there.
    """
    next_layer = task.next_layer_id()
    en_sum = sim.layer_energy_sum(task.model_id, next_layer)
    en_here = sim.layer_energies(task.model_id, next_layer)[accelerator_id]
    pref_energy = en_sum / en_here
    acc = sim.accelerators[accelerator_id]
    csw = cswitch_energy(sim.model_of(task), task, acc.prev_task,
                         sim.system.dram_energy_per_byte)
    cost_switch = csw / en_here
    return pref_energy, cost_switch, pref_energy - cost_switch


def map_score(task: InferenceTask, accelerator_id: int, params: MapScoreParams,
              sim: Simulation) -> MapScoreBreakdown:
    """Full dispatch score with every component traced."""
    assert task.state == WAITING and task.has_work()
    to_go = sim.to_go_ms(task)
    slack = sim.slack_ms(task)
    urgency, lat_pref, starvation = compute_unit_scores(task, accelerator_id, sim)
    pref_energy, cost_switch, energy_score = compute_energy_score(task, accelerator_id, sim)
    total = urgency * lat_pref + params.alpha * starvation + params.beta * energy_score
    prev_acc = task.completed[-1][1] if task.completed else None
    return MapScoreBreakdown(
        to_go=to_go, slack=slack, urgency=urgency, lat_pref=lat_pref,
        starvation=starvation, pref_energy=pref_energy, cost_switch=cost_switch,
        energy_score=energy_score, alpha=params.alpha, beta=params.beta, total=total,
        prev_accelerator_id=prev_acc)


def drop_budget_allows(sim: Simulation, model_id: str, frame_index: int,
                       config: DropConfig) -> bool:
    """True when dropping this frame keeps every window of window_frames
    consecutive frame indices at or under max_drops drops."""
    for start in range(frame_index - config.window_frames + 1, frame_index + 1):
        already = sim.drops_in_window(model_id, start, config.window_frames)
        if already + 1 > config.max_drops:
            return False
    return True


def smart_frame_drop(sim: Simulation, config: DropConfig) -> Optional[tuple[InferenceTask, float]]:
    """Pick at most one frame to abandon, or None.

    A frame qualifies when (1) even the best-case remaining latency exceeds its
    slack, (2) at least two active frames are in that situation so the system is
    genuinely oversubscribed, (3) its model is terminal in its pipeline so no
    downstream model loses its input, and (4) its model stays within the
    sliding-window drop budget. Among qualifying frames the one with the highest
    best-case-latency-to-slack ratio is returned with that ratio.
    """
    doomed = 0
    candidates: list[tuple[float, InferenceTask]] = []
    for task in sim.active_tasks():
        min_to_go = sim.min_to_go_ms(task)
        slack = sim.slack_ms(task)
        if min_to_go <= slack:
            continue
        doomed += 1
        if task.state != WAITING:
            continue  # an in-flight layer cannot be recalled
        if not sim.is_terminal_model(task.model_id):
            continue
        if not drop_budget_allows(sim, task.model_id, task.frame_index, config):
            continue
        candidates.append((min_to_go / slack, task))
    if doomed < 2 or not candidates:
        return None
    candidates.sort(key=lambda c: (-c[0], c[1].deadline, c[1].task_id))
    pressure, victim = candidates[0]
    return victim, pressure


def supernet_select(task: InferenceTask, sim: Simulation) -> str:
    """Choose the heaviest variant whose best-case remaining latency still fits
    the task's slack; when none fits, the lightest. Variants are declared
    heaviest-first, so the full network wins whenever it fits."""
    model = sim.model_of(task)
    assert model.variants and task.next_pos == model.switch_point
    slack = task.deadline - sim.now
    pos = task.next_pos
    for v in model.variants:
        if sim.variant_suffix_min_to_go(model, v.variant_id, pos) <= slack:
            return v.variant_id
    return model.variants[-1].variant_id


def assign_and_dispatch(sim: Simulation, params: MapScoreParams,
                        record_breakdown: bool = True) -> int:
    """Greedy dispatch: repeatedly score all (waiting task, idle accelerator)
    pairs and commit the best, until tasks or accelerators run out. Ties go to
    the earlier deadline, then the lower task id, then the lower accelerator id.

    The scan inlines the score formula (same operations as map_score, so the
    totals agree bit for bit) to stay cheap on long queues; the committed pair's
    full breakdown is recomputed once for the trace.
    """
    dispatched = 0
    alpha = params.alpha
    beta = params.beta
    dram = sim.system.dram_energy_per_byte
    while True:
        idle = sim.idle_accelerators()
        waiting = sim.waiting_tasks()
        if not idle or not waiting:
            return dispatched
        best_total = None
        best_key = None
        best_task = None
        best_acc = -1
        for task in waiting:
            to_go = sim.to_go_ms(task)
            slack = sim.slack_ms(task)
            urgency = to_go / slack
            next_layer = task.next_layer_id()
            lats = sim.layer_latencies(task.model_id, next_layer)
            lat_sum = sim.layer_latency_sum(task.model_id, next_layer)
            ens = sim.layer_energies(task.model_id, next_layer)
            en_sum = sim.layer_energy_sum(task.model_id, next_layer)
            starvation = (sim.now - task.last_completion_time) / (lat_sum / sim.n_acc)
            incoming = incoming_activation_bytes(sim.model_of(task), task)
            for acc in idle:
                aid = acc.accelerator_id
                lat_pref = lat_sum / lats[aid]
                en_here = ens[aid]
                pref_energy = en_sum / en_here
                prev = acc.prev_task
                if prev is None or (prev.model_id == task.model_id
                                    and prev.frame_index == task.frame_index):
                    cost_switch = 0.0
                else:
                    cost_switch = (incoming + prev.out_bytes) * dram / en_here
                total = (urgency * lat_pref + alpha * starvation
                         + beta * (pref_energy - cost_switch))
                key = (task.deadline, task.task_id, aid)
                if (best_total is None or total > best_total
                        or (total == best_total and key < best_key)):
                    best_total = total
                    best_key = key
                    best_task = task
                    best_acc = aid
        bd = map_score(best_task, best_acc, params, sim) if record_breakdown else None
        sim.dispatch(best_task, best_acc, breakdown=bd)
        dispatched += 1


class DreamScheduler(SchedulerPolicy):
    """The dynamic scheduler: optional frame dropping, optional variant
    switching, then score-driven dispatch."""

    def __init__(self, params: Optional[MapScoreParams] = None,
                 drop_config: Optional[DropConfig] = None,
                 supernet: bool = False, record_breakdown: bool = True):
        self.params = params if params is not None else MapScoreParams()
        self.drop_config = drop_config
        self.supernet = supernet
        self.record_breakdown = record_breakdown

    @property
    def name(self) -> str:
        if self.drop_config is not None and self.supernet:
            return "dream-full"
        if self.drop_config is not None:
            return "dream-smartdrop"
        return "dream-mapscore"

    def on_trigger(self, sim: Simulation) -> None:
        if self.drop_config is not None:
            while True:
                picked = smart_frame_drop(sim, self.drop_config)
                if picked is None:
                    break
                victim, pressure = picked
                log.debug("drop %s frame %d at %.3f (pressure %.3f)",
                          victim.model_id, victim.frame_index, sim.now, pressure)
                sim.drop_task(victim, pressure)
        if self.supernet:
            for task in sim.waiting_tasks():
                model = sim.model_of(task)
                if model.variants and task.next_pos == model.switch_point:
                    sim.apply_variant(task, supernet_select(task, sim))
        assign_and_dispatch(sim, self.params, self.record_breakdown)
