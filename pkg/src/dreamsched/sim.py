"""Deterministic discrete-event simulator for multi-accelerator inference.

Events are processed in (time, kind, id) order with layer completions ahead of
request arrivals ahead of window ticks at equal timestamps. Layer execution is
non-preemptive; a task may migrate between accelerators at layer granularity
unless the active policy chained it to one. Scheduling itself takes zero
simulated time, and the policy is consulted after every arrival, completion,
and frame drop. Identical inputs produce byte-identical run logs.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .hardware import CostTable, PrevTaskInfo, SystemSpec, cswitch_energy
from .workload import (
    DONE,
    DROPPED,
    RUNNING,
    WAITING,
    InferenceTask,
    ModelSpec,
    ScenarioSpec,
    edge_activates,
    exit_draw,
    instantiate_task,
    resolve_exit,
)

log = logging.getLogger(__name__)

# event kinds, in tie-break order at equal timestamps
LAYER_COMPLETE = 0
REQUEST_ARRIVAL = 1
WINDOW_TICK = 2

SLACK_EPSILON = 0.001  # ms; floor for expired slack so scores stay finite


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: int
    payload: tuple


@dataclass
class AcceleratorState:
    accelerator_id: int
    busy_until: float = 0.0
    current: Optional[tuple[int, int]] = None  # (task_id, layer_id) while busy
    prev_task: Optional[PrevTaskInfo] = None   # last task that ran here


@dataclass
class MapScoreBreakdown:
    """Score components traced for a dispatch decision."""

    to_go: float
    slack: float
    urgency: float
    lat_pref: float
    starvation: float
    pref_energy: float
    cost_switch: float
    energy_score: float
    alpha: float
    beta: float
    total: float
    prev_accelerator_id: Optional[int]  # accelerator of the task's previous layer


@dataclass
class DecisionRecord:
    time: float
    task_id: int
    model_id: str
    frame_index: int
    layer_id: int
    accelerator_id: int
    latency_ms: float
    energy_mj: float
    cswitch_mj: float
    breakdown: Optional[MapScoreBreakdown] = None


@dataclass
class FrameRecord:
    task_id: int
    model_id: str
    frame_index: int
    arrival: float
    deadline: float
    completion: Optional[float] = None  # None = never completed (infinite)
    dropped: bool = False
    variant_id: str = "original"
    layers_executed: int = 0
    exited_early: bool = False

    def violated(self) -> bool:
        return self.dropped or self.completion is None or self.completion > self.deadline


@dataclass
class DropRecord:
    time: float
    task_id: int
    model_id: str
    frame_index: int
    pressure: float  # minimum_to_go / slack at the drop decision


@dataclass
class WindowRecord:
    start: float
    end: float
    alpha: float
    beta: float
    uxcost: Optional[float]  # None when the window carried no signal


@dataclass
class RunLog:
    scenario_id: str
    system_id: str
    seed: int
    duration_ms: float
    frames: list[FrameRecord] = field(default_factory=list)
    decisions: list[DecisionRecord] = field(default_factory=list)
    drops: list[DropRecord] = field(default_factory=list)
    windows: list[WindowRecord] = field(default_factory=list)
    energy: dict[str, dict[str, float]] = field(default_factory=dict)  # model -> compute/cswitch

    def model_energy_mj(self, model_id: str) -> float:
        e = self.energy.get(model_id)
        return (e["compute"] + e["cswitch"]) if e else 0.0

    def total_energy_mj(self) -> float:
        return sum(self.model_energy_mj(m) for m in self.energy)

    def to_jsonl(self) -> str:
        """Canonical newline-delimited export, stable for byte-level diffing."""
        lines = [json.dumps({
            "type": "meta", "scenario_id": self.scenario_id, "system_id": self.system_id,
            "seed": self.seed, "duration_ms": self.duration_ms}, sort_keys=True)]
        for f in self.frames:
            lines.append(json.dumps({
                "type": "frame", "task_id": f.task_id, "model_id": f.model_id,
                "frame_index": f.frame_index, "arrival": f.arrival, "deadline": f.deadline,
                "completion": f.completion, "dropped": f.dropped, "variant_id": f.variant_id,
                "layers_executed": f.layers_executed, "exited_early": f.exited_early},
                sort_keys=True))
        for d in self.decisions:
            row = {
                "type": "decision", "time": d.time, "task_id": d.task_id,
                "model_id": d.model_id, "frame_index": d.frame_index, "layer_id": d.layer_id,
                "accelerator_id": d.accelerator_id, "latency_ms": d.latency_ms,
                "energy_mj": d.energy_mj, "cswitch_mj": d.cswitch_mj}
            if d.breakdown is not None:
                b = d.breakdown
                row["score"] = {
                    "to_go": b.to_go, "slack": b.slack, "urgency": b.urgency,
                    "lat_pref": b.lat_pref, "starvation": b.starvation,
                    "pref_energy": b.pref_energy, "cost_switch": b.cost_switch,
                    "energy_score": b.energy_score, "alpha": b.alpha, "beta": b.beta,
                    "total": b.total, "prev_accelerator_id": b.prev_accelerator_id}
            lines.append(json.dumps(row, sort_keys=True))
        for dr in self.drops:
            lines.append(json.dumps({
                "type": "drop", "time": dr.time, "task_id": dr.task_id,
                "model_id": dr.model_id, "frame_index": dr.frame_index,
                "pressure": dr.pressure}, sort_keys=True))
        for w in self.windows:
            lines.append(json.dumps({
                "type": "window", "start": w.start, "end": w.end, "alpha": w.alpha,
                "beta": w.beta, "uxcost": w.uxcost}, sort_keys=True))
        for model_id in sorted(self.energy):
            e = self.energy[model_id]
            lines.append(json.dumps({
                "type": "energy", "model_id": model_id, "compute_mj": e["compute"],
                "cswitch_mj": e["cswitch"]}, sort_keys=True))
        return "\n".join(lines) + "\n"


class SchedulerPolicy:
    """Base policy: reacts to scheduling triggers by dispatching work."""

    name = "base"

    def bind(self, sim: "Simulation") -> None:
        """Called once before the run; policies may precompute against costs."""

    def on_trigger(self, sim: "Simulation") -> None:
        raise NotImplementedError


def generate_requests(scenario: ScenarioSpec, horizon_ms: float) -> list[tuple[float, str, int]]:
    """Periodic source arrivals (time, model_id, frame_index) for k*period < horizon,
    sorted by time with the scenario's model order breaking ties."""
    out: list[tuple[float, str, int]] = []
    sources = scenario.source_models()
    order = {mid: i for i, mid in enumerate(m.model_id for m in scenario.models)}
    for mid in sources:
        period = scenario.period_ms(mid)
        k = 0
        while True:
            t = k * period
            if t >= horizon_ms:
                break
            out.append((t, mid, k))
            k += 1
    out.sort(key=lambda r: (r[0], order[r[1]], r[2]))
    return out


class Simulation:
    """One scenario run on one system under one policy."""

    def __init__(self, scenario: ScenarioSpec, system: SystemSpec, costs: CostTable,
                 policy: SchedulerPolicy, *, duration_ms: Optional[float] = None,
                 seed: Optional[int] = None,
                 edge_probability_override: Optional[float] = None,
                 window_ms: Optional[float] = None,
                 on_window: Optional[Callable[["Simulation", float, float], None]] = None):
        costs.check_coverage(scenario.models, system)
        self.scenario = scenario
        self.system = system
        self.costs = costs
        self.policy = policy
        self.seed = scenario.seed if seed is None else seed
        self.duration = scenario.duration_s * 1000.0 if duration_ms is None else duration_ms
        self.edge_probability_override = edge_probability_override
        self.window_ms = window_ms
        self.on_window = on_window

        self.now = 0.0
        self.accelerators = [AcceleratorState(a.accelerator_id) for a in system.accelerators]
        self.n_acc = len(self.accelerators)
        self.tasks: dict[int, InferenceTask] = {}
        self._active: list[InferenceTask] = []  # waiting or running, creation order
        self._frames: dict[int, FrameRecord] = {}
        self._next_task_id = 0
        self._heap: list[tuple[float, int, int, int, int, tuple]] = []
        self._seq = 0
        self.drop_history: dict[str, list[int]] = {}   # model -> sorted dropped frame indices
        self.window_arrivals: set[str] = set()          # models arriving in current window
        self._occupied_ms = [0.0] * self.n_acc          # per accelerator busy-time ledger

        self.runlog = RunLog(
            scenario_id=scenario.scenario_id, system_id=system.system_id,
            seed=self.seed, duration_ms=self.duration,
            energy={m.model_id: {"compute": 0.0, "cswitch": 0.0} for m in scenario.models})

        self._build_cost_aggregates()
        self._models = {m.model_id: m for m in scenario.models}
        self._model_index = {m.model_id: i for i, m in enumerate(scenario.models)}
        self._terminal = {m.model_id: scenario.is_terminal(m.model_id)
                          for m in scenario.models}

    # -- cost aggregates -----------------------------------------------------

    def _build_cost_aggregates(self) -> None:
        """Precompute per-layer vectors and per-variant suffix sums so score
        terms are O(1) at dispatch time. Touching every triple here doubles as
        the bind-time coverage check."""
        self._lat: dict[tuple[str, int], tuple[float, ...]] = {}
        self._lat_sum: dict[tuple[str, int], float] = {}
        self._lat_min: dict[tuple[str, int], float] = {}
        self._en: dict[tuple[str, int], tuple[float, ...]] = {}
        self._en_sum: dict[tuple[str, int], float] = {}
        for m in self.scenario.models:
            for l in m.layers:
                key = (m.model_id, l.layer_id)
                lats = tuple(self.costs.latency(m.model_id, l.layer_id, a)
                             for a in range(self.n_acc))
                ens = tuple(self.costs.energy(m.model_id, l.layer_id, a)
                            for a in range(self.n_acc))
                self._lat[key] = lats
                self._lat_sum[key] = sum(lats)
                self._lat_min[key] = min(lats)
                self._en[key] = ens
                self._en_sum[key] = sum(ens)
        # suffix sums per (model, variant): entry i covers layer positions i..end
        self._suffix_lat_sum: dict[tuple[str, str], tuple[float, ...]] = {}
        self._suffix_lat_min: dict[tuple[str, str], tuple[float, ...]] = {}
        for m in self.scenario.models:
            seqs = ([(v.variant_id, v.layer_ids) for v in m.variants]
                    if m.variants else [(m.default_variant_id(), m.full_layer_ids())])
            for vid, seq in seqs:
                sums = [0.0] * (len(seq) + 1)
                mins = [0.0] * (len(seq) + 1)
                for i in range(len(seq) - 1, -1, -1):
                    sums[i] = sums[i + 1] + self._lat_sum[(m.model_id, seq[i])]
                    mins[i] = mins[i + 1] + self._lat_min[(m.model_id, seq[i])]
                self._suffix_lat_sum[(m.model_id, vid)] = tuple(sums)
                self._suffix_lat_min[(m.model_id, vid)] = tuple(mins)

    # -- quantities used by policies ------------------------------------------

    def model_of(self, task: InferenceTask) -> ModelSpec:
        return self._models[task.model_id]

    def layer_latencies(self, model_id: str, layer_id: int) -> tuple[float, ...]:
        return self._lat[(model_id, layer_id)]

    def layer_latency_sum(self, model_id: str, layer_id: int) -> float:
        return self._lat_sum[(model_id, layer_id)]

    def layer_energies(self, model_id: str, layer_id: int) -> tuple[float, ...]:
        return self._en[(model_id, layer_id)]

    def layer_energy_sum(self, model_id: str, layer_id: int) -> float:
        return self._en_sum[(model_id, layer_id)]

    def to_go_ms(self, task: InferenceTask) -> float:
        """Average over accelerators of the task's total remaining latency."""
        return self._suffix_lat_sum[(task.model_id, task.variant_id)][task.next_pos] / self.n_acc

    def min_to_go_ms(self, task: InferenceTask) -> float:
        """Lower bound on remaining latency: per layer best accelerator, plus the
        residual of an in-flight layer for running tasks."""
        mins = self._suffix_lat_min[(task.model_id, task.variant_id)]
        if task.state == RUNNING:
            acc = self.accelerators[task.accelerator_id]
            return (acc.busy_until - self.now) + mins[task.next_pos + 1]
        return mins[task.next_pos]

    def variant_suffix_min_to_go(self, model: ModelSpec, variant_id: str, pos: int) -> float:
        return self._suffix_lat_min[(model.model_id, variant_id)][pos]

    def slack_ms(self, task: InferenceTask, *, clamp: bool = True) -> float:
        s = task.deadline - self.now
        if clamp and s <= 0.0:
            return SLACK_EPSILON
        return s

    def waiting_tasks(self) -> list[InferenceTask]:
        return [t for t in self._active if t.state == WAITING]

    def active_tasks(self) -> list[InferenceTask]:
        return [t for t in self._active if t.state in (WAITING, RUNNING)]

    def idle_accelerators(self) -> list[AcceleratorState]:
        return [a for a in self.accelerators if a.busy_until <= self.now]

    def is_terminal_model(self, model_id: str) -> bool:
        return self._terminal[model_id]

    def drops_in_window(self, model_id: str, first_frame: int, window_frames: int) -> int:
        drops = self.drop_history.get(model_id, [])
        last = first_frame + window_frames - 1
        return sum(1 for f in drops if first_frame <= f <= last)

    # -- mutations driven by policies -----------------------------------------

    def dispatch(self, task: InferenceTask, accelerator_id: int, *,
                 chain_layers: int = 0,
                 breakdown: Optional[MapScoreBreakdown] = None) -> DecisionRecord:
        acc = self.accelerators[accelerator_id]
        assert task.state == WAITING and task.has_work()
        assert acc.busy_until <= self.now, "dispatch to a busy accelerator"
        layer_id = task.next_layer_id()
        lat = self._lat[(task.model_id, layer_id)][accelerator_id]
        en = self._en[(task.model_id, layer_id)][accelerator_id]
        csw = cswitch_energy(self.model_of(task), task, acc.prev_task,
                             self.system.dram_energy_per_byte)
        task.state = RUNNING
        task.accelerator_id = accelerator_id
        task.chain_left = chain_layers
        acc.current = (task.task_id, layer_id)
        acc.busy_until = self.now + lat
        self._occupied_ms[accelerator_id] += lat
        ledger = self.runlog.energy[task.model_id]
        ledger["compute"] += en
        ledger["cswitch"] += csw
        rec = DecisionRecord(
            time=self.now, task_id=task.task_id, model_id=task.model_id,
            frame_index=task.frame_index, layer_id=layer_id, accelerator_id=accelerator_id,
            latency_ms=lat, energy_mj=en, cswitch_mj=csw, breakdown=breakdown)
        self.runlog.decisions.append(rec)
        self._push(acc.busy_until, LAYER_COMPLETE, task.task_id, 0, (accelerator_id,))
        return rec

    def drop_task(self, task: InferenceTask, pressure: float) -> None:
        """Abandon a waiting frame: it never completes and counts as a violation."""
        assert task.state == WAITING
        task.state = DROPPED
        frame = self._frames[task.task_id]
        frame.dropped = True
        frame.variant_id = task.variant_id
        frame.layers_executed = task.next_pos
        self.drop_history.setdefault(task.model_id, []).append(task.frame_index)
        self.drop_history[task.model_id].sort()
        self.runlog.drops.append(DropRecord(
            time=self.now, task_id=task.task_id, model_id=task.model_id,
            frame_index=task.frame_index, pressure=pressure))
        self._active = [t for t in self._active if t.task_id != task.task_id]

    def apply_variant(self, task: InferenceTask, variant_id: str) -> None:
        if task.variant_id != variant_id:
            task.apply_variant(self.model_of(task).variant(variant_id))

    # -- event plumbing --------------------------------------------------------

    def _push(self, time: float, kind: int, k1: int, k2: int, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, kind, k1, k2, self._seq, payload))

    def _spawn_task(self, model_id: str, frame_index: int, anchor: float) -> None:
        model = self._models[model_id]
        task = instantiate_task(model, frame_index, self.now, self.scenario,
                                task_id=self._next_task_id, anchor_time=anchor)
        self._next_task_id += 1
        self.tasks[task.task_id] = task
        self._active.append(task)
        self._frames[task.task_id] = FrameRecord(
            task_id=task.task_id, model_id=model_id, frame_index=frame_index,
            arrival=task.arrival_time, deadline=task.deadline, variant_id=task.variant_id)
        self.runlog.frames.append(self._frames[task.task_id])
        self.window_arrivals.add(model_id)

    def _finish_task(self, task: InferenceTask) -> None:
        task.state = DONE
        frame = self._frames[task.task_id]
        frame.completion = self.now
        frame.variant_id = task.variant_id
        frame.layers_executed = task.next_pos
        frame.exited_early = task.exited_early
        self._active = [t for t in self._active if t.task_id != task.task_id]
        # a finished model may trigger its dependent children
        for edge in self.scenario.children_of(task.model_id):
            if edge_activates(self.scenario, edge, task.frame_index,
                              self.edge_probability_override):
                child_idx = self._model_index[edge.child]
                self._push(self.now, REQUEST_ARRIVAL, child_idx, task.frame_index,
                           (edge.child, task.frame_index, task.anchor_time))

    def _handle_completion(self, accelerator_id: int) -> None:
        acc = self.accelerators[accelerator_id]
        assert acc.current is not None
        task_id, layer_id = acc.current
        task = self.tasks[task_id]
        task.completed.append((layer_id, accelerator_id))
        task.next_pos += 1
        task.last_completion_time = self.now
        task.state = WAITING
        task.accelerator_id = None
        acc.current = None
        acc.prev_task = PrevTaskInfo(
            model_id=task.model_id, frame_index=task.frame_index,
            out_bytes=self.model_of(task).layer(layer_id).activation_bytes)
        model = self.model_of(task)
        if model.exit_branch_after(layer_id) is not None and task.has_work():
            mi = self._model_index[task.model_id]
            resolve_exit(task, model, layer_id,
                         lambda: exit_draw(self.seed, mi, task.frame_index, layer_id))
        if not task.has_work():
            self._finish_task(task)
        elif task.chain_left > 0:
            # policy-imposed binding: continue on the same accelerator untriggered
            task.chain_left -= 1
            chain = task.chain_left
            task.chain_left = 0
            self.dispatch(task, accelerator_id, chain_layers=chain)

    def _handle_arrival(self, model_id: str, frame_index: int, anchor: float) -> None:
        self._spawn_task(model_id, frame_index, anchor)

    def run(self) -> RunLog:
        self.policy.bind(self)
        for t, mid, k in generate_requests(self.scenario, self.duration):
            self._push(t, REQUEST_ARRIVAL, self._model_index[mid], k, (mid, k, t))
        if self.window_ms:
            n_windows = int(math.ceil(self.duration / self.window_ms))
            for i in range(1, n_windows + 1):
                t = min(i * self.window_ms, self.duration)
                self._push(t, WINDOW_TICK, i, 0, (i * self.window_ms - self.window_ms, t))
        while self._heap and self._heap[0][0] <= self.duration:
            time, kind, _k1, _k2, _seq, payload = heapq.heappop(self._heap)
            self.now = time
            if kind == LAYER_COMPLETE:
                self._handle_completion(payload[0])
                self.policy.on_trigger(self)
            elif kind == REQUEST_ARRIVAL:
                self._handle_arrival(*payload)
                self.policy.on_trigger(self)
            else:  # WINDOW_TICK
                start, end = payload
                if self.on_window is not None:
                    self.on_window(self, start, end)
                self.window_arrivals = set()
        self.now = self.duration
        return self.runlog

    # -- invariants -------------------------------------------------------------

    def verify_conservation(self) -> None:
        """Exact busy-time and energy accounting against the decision trace."""
        occupied = [0.0] * self.n_acc
        energy = {m.model_id: {"compute": 0.0, "cswitch": 0.0} for m in self.scenario.models}
        last_end = [0.0] * self.n_acc
        for d in self.runlog.decisions:
            occupied[d.accelerator_id] += d.latency_ms
            energy[d.model_id]["compute"] += d.energy_mj
            energy[d.model_id]["cswitch"] += d.cswitch_mj
            assert d.time >= last_end[d.accelerator_id], (
                f"overlapping execution on accelerator {d.accelerator_id} at {d.time}")
            last_end[d.accelerator_id] = d.time + d.latency_ms
        assert occupied == self._occupied_ms, "busy-time ledger mismatch"
        assert energy == self.runlog.energy, "energy ledger mismatch"


def run_simulation(scenario: ScenarioSpec, system: SystemSpec, costs: CostTable,
                   policy: SchedulerPolicy, *, duration_ms: Optional[float] = None,
                   seed: Optional[int] = None,
                   edge_probability_override: Optional[float] = None,
                   window_ms: Optional[float] = None,
                   on_window=None, verify: bool = True) -> RunLog:
    sim = Simulation(scenario, system, costs, policy, duration_ms=duration_ms, seed=seed,
                     edge_probability_override=edge_probability_override,
                     window_ms=window_ms, on_window=on_window)
    runlog = sim.run()
    if verify:
        sim.verify_conservation()
    return runlog
