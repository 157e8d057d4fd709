"""Workload model: layered models, pipelines with dependency edges, per-frame tasks.

Time is float milliseconds throughout; energy is millijoules. A scenario file
declares models (layer lists plus optional lighter variants and early-exit
branches) and pipelines (dependency edges between models). At run time every
arriving frame of a model becomes one InferenceTask.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import yaml

ORIGINAL_VARIANT = "original"

# task lifecycle states
WAITING = "waiting"
RUNNING = "running"
DONE = "done"
DROPPED = "dropped"

# substream tags for the deterministic per-frame draws
_EXIT_STREAM = 1
_EDGE_STREAM = 2


class ScenarioError(Exception):
    """Base class for scenario configuration problems."""


class ScenarioSyntaxError(ScenarioError):
    """Config text that does not parse; carries the reported position."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.column = column


class ScenarioSemanticError(ScenarioError):
    """Well-formed config that violates a semantic rule; names the offending entity."""


def unit_draw(seed: int, stream: int, *key: int) -> float:
    """Uniform draw in [0, 1) keyed by (seed, stream, key ints).

    Hash-based so the draw depends only on the key, never on call order or
    process state: scheduler choices cannot perturb workload randomness.
    """
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(8, "little", signed=True))
    h.update(int(stream).to_bytes(2, "little", signed=True))
    for k in key:
        h.update(int(k).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest()[:8], "little") / 2.0**64


@dataclass(frozen=True)
class LayerSpec:
    layer_id: int            # ordinal within the model, contiguous from 0
    op_kind: str             # e.g. conv, dwconv, fc, rnn, attention
    work_units: float        # abstract compute amount, > 0
    activation_bytes: float  # output activation footprint, >= 0

    def __post_init__(self):
        if self.work_units <= 0:
            raise ScenarioSemanticError(f"layer {self.layer_id}: work_units must be > 0")
        if self.activation_bytes < 0:
            raise ScenarioSemanticError(f"layer {self.layer_id}: activation_bytes must be >= 0")


@dataclass(frozen=True)
class SupernetVariant:
    variant_id: str
    layer_ids: tuple[int, ...]   # ordered subset of the model's layer ids
    relative_flops: float        # 1.0 for the full network, smaller for slimmer ones
    accuracy_note: str = ""


@dataclass(frozen=True)
class ExitBranch:
    after_layer: int         # layer id whose completion may end the model early
    probability: float       # chance the remaining layers are skipped

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ScenarioSemanticError(
                f"exit branch after layer {self.after_layer}: probability must be in [0, 1]")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    layers: tuple[LayerSpec, ...]
    variants: tuple[SupernetVariant, ...] = ()
    switch_point: Optional[int] = None       # layer position where a variant is committed
    exit_branches: tuple[ExitBranch, ...] = ()
    input_bytes: Optional[float] = None      # input activation of layer 0

    def layer(self, layer_id: int) -> LayerSpec:
        return self.layers[layer_id]

    def full_layer_ids(self) -> tuple[int, ...]:
        return tuple(l.layer_id for l in self.layers)

    def default_variant_id(self) -> str:
        return self.variants[0].variant_id if self.variants else ORIGINAL_VARIANT

    def variant(self, variant_id: str) -> SupernetVariant:
        for v in self.variants:
            if v.variant_id == variant_id:
                return v
        raise KeyError(variant_id)

    def layer0_input_bytes(self) -> float:
        # declared input size, else the first layer's own activation footprint
        if self.input_bytes is not None:
            return self.input_bytes
        return self.layers[0].activation_bytes

    def exit_branch_after(self, layer_id: int) -> Optional[ExitBranch]:
        for b in self.exit_branches:
            if b.after_layer == layer_id:
                return b
        return None


@dataclass(frozen=True)
class DependencyEdge:
    parent: str
    child: str
    kind: str = "control"            # "data" always activates, "control" activates with p
    activation_probability: float = 0.5

    def __post_init__(self):
        if self.kind not in ("data", "control"):
            raise ScenarioSemanticError(
                f"edge {self.parent}->{self.child}: kind must be data or control")
        if not (0.0 <= self.activation_probability <= 1.0):
            raise ScenarioSemanticError(
                f"edge {self.parent}->{self.child}: probability must be in [0, 1]")


@dataclass(frozen=True)
class PipelineSpec:
    pipeline_id: str
    members: tuple[str, ...]
    edges: tuple[DependencyEdge, ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    duration_s: float
    seed: int
    models: tuple[ModelSpec, ...]
    pipelines: tuple[PipelineSpec, ...]
    fps: Mapping[str, float]                          # model_id -> source frame rate
    explicit_deadlines: Optional[Mapping[str, float]] = None  # model_id -> ms, else period policy

    def model(self, model_id: str) -> ModelSpec:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise KeyError(model_id)

    def model_index(self, model_id: str) -> int:
        for i, m in enumerate(self.models):
            if m.model_id == model_id:
                return i
        raise KeyError(model_id)

    def edges(self) -> tuple[DependencyEdge, ...]:
        out: list[DependencyEdge] = []
        for p in self.pipelines:
            out.extend(p.edges)
        return tuple(out)

    def children_of(self, model_id: str) -> tuple[DependencyEdge, ...]:
        return tuple(e for e in self.edges() if e.parent == model_id)

    def parent_of(self, model_id: str) -> Optional[DependencyEdge]:
        for e in self.edges():
            if e.child == model_id:
                return e
        return None

    def source_models(self) -> tuple[str, ...]:
        have_parent = {e.child for e in self.edges()}
        return tuple(m.model_id for m in self.models if m.model_id not in have_parent)

    def is_terminal(self, model_id: str) -> bool:
        """True when no other model depends on this one."""
        return not any(e.parent == model_id for e in self.edges())

    def period_ms(self, model_id: str) -> float:
        return 1000.0 / self.fps[model_id]

    def deadline_offset_ms(self, model_id: str) -> float:
        if self.explicit_deadlines is not None and model_id in self.explicit_deadlines:
            return self.explicit_deadlines[model_id]
        return self.period_ms(model_id)


@dataclass
class InferenceTask:
    """One frame of one model moving through the system. The only mutable type."""

    task_id: int
    model_id: str
    frame_index: int
    arrival_time: float            # when the task became schedulable
    deadline: float
    anchor_time: float             # pipeline frame origin t0 (deadlines anchor here)
    variant_id: str
    layer_seq: tuple[int, ...]     # layer ids of the committed variant
    next_pos: int = 0              # index into layer_seq of the next layer to run
    completed: list[tuple[int, int]] = field(default_factory=list)  # (layer_id, accelerator_id)
    last_completion_time: float = 0.0
    state: str = WAITING
    accelerator_id: Optional[int] = None  # set while running
    chain_left: int = 0            # pending back-to-back layers bound to the same accelerator
    exited_early: bool = False

    @property
    def remaining_layers(self) -> tuple[int, ...]:
        return self.layer_seq[self.next_pos:]

    def next_layer_id(self) -> int:
        return self.layer_seq[self.next_pos]

    def has_work(self) -> bool:
        return self.next_pos < len(self.layer_seq)

    def apply_variant(self, variant: SupernetVariant) -> None:
        # legal only while the shared prefix is all that has run
        assert self.layer_seq[: self.next_pos] == variant.layer_ids[: self.next_pos]
        self.variant_id = variant.variant_id
        self.layer_seq = variant.layer_ids

    def truncate_remaining(self) -> None:
        self.layer_seq = self.layer_seq[: self.next_pos]
        self.exited_early = True


def instantiate_task(
    model: ModelSpec,
    frame_index: int,
    arrival_time: float,
    scenario: ScenarioSpec,
    *,
    task_id: int = 0,
    anchor_time: Optional[float] = None,
) -> InferenceTask:
    """Create the per-frame task. Deadline = anchor + the model's own period
    (or its explicit deadline offset); the anchor is the pipeline frame origin,
    which for source models is the arrival itself."""
    anchor = arrival_time if anchor_time is None else anchor_time
    deadline = anchor + scenario.deadline_offset_ms(model.model_id)
    layer_seq = (model.variants[0].layer_ids if model.variants
                 else model.full_layer_ids())
    return InferenceTask(
        task_id=task_id,
        model_id=model.model_id,
        frame_index=frame_index,
        arrival_time=arrival_time,
        deadline=deadline,
        anchor_time=anchor,
        variant_id=model.default_variant_id(),
        layer_seq=layer_seq,
        last_completion_time=arrival_time,
    )


def resolve_exit(task: InferenceTask, model: ModelSpec, completed_layer_id: int,
                 draw: Callable[[], float]) -> bool:
    """Apply an early-exit branch after a completed layer.

    Returns True when the branch fires; the task's remaining layers are then
    truncated (skipped, not completed) and the model finishes here.
    """
    branch = model.exit_branch_after(completed_layer_id)
    assert branch is not None, f"layer {completed_layer_id} of {model.model_id} has no exit branch"
    if not task.has_work():
        return False  # nothing left to skip
    if draw() < branch.probability:
        task.truncate_remaining()
        return True
    return False


def exit_draw(seed: int, model_index: int, frame_index: int, layer_id: int) -> float:
    return unit_draw(seed, _EXIT_STREAM, model_index, frame_index, layer_id)


def edge_draw(seed: int, parent_index: int, child_index: int, frame_index: int) -> float:
    return unit_draw(seed, _EDGE_STREAM, parent_index, child_index, frame_index)


def edge_activates(scenario: ScenarioSpec, edge: DependencyEdge, frame_index: int,
                   probability_override: Optional[float] = None) -> bool:
    """Decide whether a dependency edge fires for a given frame.

    The draw is keyed by (seed, edge, frame) alone, so the activation set is
    identical across scheduler policies and monotone in the probability.
    """
    if edge.kind == "data":
        return True
    p = edge.activation_probability if probability_override is None else probability_override
    u = edge_draw(scenario.seed, scenario.model_index(edge.parent),
                  scenario.model_index(edge.child), frame_index)
    return u < p


# ---------------------------------------------------------------------------
# parsing / validation / serialization


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioSemanticError(msg)


def validate_scenario(spec: ScenarioSpec) -> None:
    """Cross-entity semantic checks; raises ScenarioSemanticError naming the entity."""
    _require(spec.duration_s > 0, f"scenario {spec.scenario_id}: duration_s must be > 0")
    _require(len(spec.pipelines) > 0, f"scenario {spec.scenario_id}: has no pipelines")
    _require(-(2**63) <= spec.seed < 2**63, f"scenario {spec.scenario_id}: seed must fit 64 bits")

    model_ids = [m.model_id for m in spec.models]
    _require(len(model_ids) == len(set(model_ids)),
             f"scenario {spec.scenario_id}: duplicate model ids")

    seen: dict[str, str] = {}
    for p in spec.pipelines:
        for member in p.members:
            _require(member in model_ids,
                     f"pipeline {p.pipeline_id}: unknown member model {member}")
            _require(member not in seen,
                     f"model {member} appears in pipelines {seen.get(member)} and {p.pipeline_id}")
            seen[member] = p.pipeline_id
    for mid in model_ids:
        _require(mid in seen, f"model {mid} belongs to no pipeline")

    for m in spec.models:
        _require(len(m.layers) > 0, f"model {m.model_id}: has no layers")
        ids = [l.layer_id for l in m.layers]
        _require(ids == list(range(len(ids))),
                 f"model {m.model_id}: layer ids must be contiguous from 0")
        _require(m.model_id in spec.fps and spec.fps[m.model_id] > 0,
                 f"model {m.model_id}: missing or non-positive fps")
        for b in m.exit_branches:
            _require(b.after_layer in ids,
                     f"model {m.model_id}: exit branch references unknown layer {b.after_layer}")
        if m.variants:
            _require(m.switch_point is not None,
                     f"model {m.model_id}: variants declared without a switch_point")
            sp = m.switch_point
            _require(0 <= sp < len(m.layers),
                     f"model {m.model_id}: switch_point {sp} out of range")
            _require(m.variants[0].relative_flops == 1.0,
                     f"model {m.model_id}: first variant must be the full network "
                     f"(relative_flops 1.0)")
            _require(m.variants[0].layer_ids == m.full_layer_ids(),
                     f"model {m.model_id}: first variant must list every layer")
            work = {l.layer_id: l.work_units for l in m.layers}
            prev_work = None
            vids = set()
            for v in m.variants:
                _require(v.variant_id not in vids,
                         f"model {m.model_id}: duplicate variant {v.variant_id}")
                vids.add(v.variant_id)
                _require(len(v.layer_ids) >= sp,
                         f"model {m.model_id}: variant {v.variant_id} shorter than switch_point")
                _require(v.layer_ids[:sp] == m.full_layer_ids()[:sp],
                         f"model {m.model_id}: variant {v.variant_id} does not share the "
                         f"prefix up to the switch_point")
                _require(all(i in work for i in v.layer_ids),
                         f"model {m.model_id}: variant {v.variant_id} references unknown layers")
                _require(all(a < b for a, b in zip(v.layer_ids, v.layer_ids[1:])),
                         f"model {m.model_id}: variant {v.variant_id} layers out of order")
                total = sum(work[i] for i in v.layer_ids)
                if prev_work is not None:
                    _require(total <= prev_work,
                             f"model {m.model_id}: variants must be ordered by descending work")
                prev_work = total
        else:
            _require(m.switch_point is None,
                     f"model {m.model_id}: switch_point without variants")

    incoming: dict[str, int] = {mid: 0 for mid in model_ids}
    for p in spec.pipelines:
        adj: dict[str, list[str]] = {m: [] for m in p.members}
        for e in p.edges:
            _require(e.parent in p.members and e.child in p.members,
                     f"pipeline {p.pipeline_id}: edge {e.parent}->{e.child} leaves the pipeline")
            _require(e.parent != e.child,
                     f"pipeline {p.pipeline_id}: self edge on {e.parent}")
            if e.kind == "data":
                _require(e.activation_probability == 1.0,
                         f"edge {e.parent}->{e.child}: data edges always activate (p must be 1)")
            adj[e.parent].append(e.child)
            incoming[e.child] += 1
            _require(incoming[e.child] <= 1,
                     f"model {e.child}: more than one parent edge is not supported")
        # cycle check via iterative DFS
        color = {m: 0 for m in p.members}
        for root in p.members:
            if color[root]:
                continue
            stack: list[tuple[str, int]] = [(root, 0)]
            color[root] = 1
            while stack:
                node, i = stack[-1]
                if i < len(adj[node]):
                    stack[-1] = (node, i + 1)
                    nxt = adj[node][i]
                    _require(color[nxt] != 1,
                             f"pipeline {p.pipeline_id}: dependency cycle through {nxt}")
                    if color[nxt] == 0:
                        color[nxt] = 1
                        stack.append((nxt, 0))
                else:
                    color[node] = 2
                    stack.pop()

    if spec.explicit_deadlines:
        for mid, ms in spec.explicit_deadlines.items():
            _require(mid in model_ids, f"deadline_policy: unknown model {mid}")
            _require(ms > 0, f"deadline_policy: model {mid} deadline must be > 0")


def _model_from_dict(d: Mapping, scenario_id: str) -> tuple[ModelSpec, float]:
    try:
        mid = d["model_id"]
        fps = float(d["fps"])
        raw_layers = d["layers"]
    except (KeyError, TypeError) as exc:
        raise ScenarioSemanticError(f"scenario {scenario_id}: model entry missing {exc}") from exc
    layers = tuple(
        LayerSpec(layer_id=i, op_kind=l["op_kind"], work_units=float(l["work_units"]),
                  activation_bytes=float(l["activation_bytes"]))
        for i, l in enumerate(raw_layers))
    variants = tuple(
        SupernetVariant(variant_id=v["variant_id"], layer_ids=tuple(int(i) for i in v["layer_ids"]),
                        relative_flops=float(v["relative_flops"]),
                        accuracy_note=v.get("accuracy_note", ""))
        for v in d.get("variants", []) or [])
    exits = tuple(
        ExitBranch(after_layer=int(b["after_layer"]), probability=float(b["probability"]))
        for b in d.get("exit_branches", []) or [])
    sp = d.get("switch_point")
    model = ModelSpec(
        model_id=mid, layers=layers, variants=variants,
        switch_point=int(sp) if sp is not None else None,
        exit_branches=exits,
        input_bytes=float(d["input_bytes"]) if d.get("input_bytes") is not None else None)
    return model, fps


def scenario_from_dict(doc: Mapping) -> ScenarioSpec:
    if not isinstance(doc, Mapping):
        raise ScenarioSemanticError("scenario document must be a mapping")
    for key in ("scenario_id", "duration_s", "seed", "models", "pipelines"):
        if key not in doc:
            raise ScenarioSemanticError(f"scenario document missing top-level key {key}")
    sid = doc["scenario_id"]
    models: list[ModelSpec] = []
    fps: dict[str, float] = {}
    for entry in doc["models"]:
        model, rate = _model_from_dict(entry, sid)
        models.append(model)
        fps[model.model_id] = rate
    pipelines = []
    for p in doc["pipelines"]:
        edges = tuple(
            DependencyEdge(
                parent=e["parent"], child=e["child"], kind=e.get("kind", "control"),
                activation_probability=float(e["p"]) if "p" in e
                else (1.0 if e.get("kind", "control") == "data" else 0.5))
            for e in p.get("edges", []) or [])
        pipelines.append(PipelineSpec(pipeline_id=p["pipeline_id"],
                                      members=tuple(p["members"]), edges=edges))
    policy = doc.get("deadline_policy", "period")
    if policy == "period" or policy is None:
        explicit = None
    elif isinstance(policy, Mapping):
        explicit = {str(k): float(v) for k, v in policy.items()}
    else:
        raise ScenarioSemanticError("deadline_policy must be 'period' or a model->ms mapping")
    spec = ScenarioSpec(
        scenario_id=sid, duration_s=float(doc["duration_s"]), seed=int(doc["seed"]),
        models=tuple(models), pipelines=tuple(pipelines), fps=fps,
        explicit_deadlines=explicit)
    validate_scenario(spec)
    return spec


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse and validate a scenario document from config text."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ScenarioSyntaxError(str(getattr(exc, "problem", exc)),
                                      line=mark.line + 1, column=mark.column + 1) from exc
        raise ScenarioSyntaxError(str(exc)) from exc
    if doc is None:
        raise ScenarioSemanticError("scenario document is empty")
    return scenario_from_dict(doc)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    models = []
    for m in spec.models:
        entry: dict = {
            "model_id": m.model_id,
            "fps": spec.fps[m.model_id],
            "layers": [
                {"op_kind": l.op_kind, "work_units": l.work_units,
                 "activation_bytes": l.activation_bytes}
                for l in m.layers],
        }
        if m.input_bytes is not None:
            entry["input_bytes"] = m.input_bytes
        if m.variants:
            entry["switch_point"] = m.switch_point
            entry["variants"] = [
                {"variant_id": v.variant_id, "layer_ids": list(v.layer_ids),
                 "relative_flops": v.relative_flops,
                 **({"accuracy_note": v.accuracy_note} if v.accuracy_note else {})}
                for v in m.variants]
        if m.exit_branches:
            entry["exit_branches"] = [
                {"after_layer": b.after_layer, "probability": b.probability}
                for b in m.exit_branches]
        models.append(entry)
    pipelines = []
    for p in spec.pipelines:
        entry = {"pipeline_id": p.pipeline_id, "members": list(p.members)}
        if p.edges:
            entry["edges"] = [
                {"parent": e.parent, "child": e.child, "kind": e.kind,
                 "p": e.activation_probability}
                for e in p.edges]
        pipelines.append(entry)
    doc = {
        "scenario_id": spec.scenario_id,
        "duration_s": spec.duration_s,
        "seed": spec.seed,
        "models": models,
        "pipelines": pipelines,
    }
    if spec.explicit_deadlines is not None:
        doc["deadline_policy"] = dict(spec.explicit_deadlines)
    return doc


def serialize_scenario(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(scenario_to_dict(spec), sort_keys=False)


def load_scenario(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())
