"""Hardware description and per-layer cost model.

Costs are a closed table: latency and energy for every
(model, layer, accelerator) triple, either loaded from CSV or generated
synthetically from accelerator size and dataflow/op affinity. Context-switch
energy is charged separately from the activation traffic through DRAM.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .workload import InferenceTask, ModelSpec, unit_draw

COST_CSV_HEADER = ["model_id", "layer_id", "accelerator_id", "latency_ms", "energy_mj"]

_LAT_JITTER_STREAM = 11
_ENERGY_JITTER_STREAM = 12


class HardwareError(Exception):
    """Base class for system/cost configuration problems."""


class CostTableError(HardwareError):
    """Missing, malformed, or non-positive cost entries."""


@dataclass(frozen=True)
class AcceleratorSpec:
    accelerator_id: int
    label: str
    dataflow: str      # e.g. WS (weight stationary) or OS (output stationary)
    pe_count: int

    def __post_init__(self):
        if self.pe_count <= 0:
            raise HardwareError(f"accelerator {self.label}: pe_count must be > 0")


@dataclass(frozen=True)
class SystemSpec:
    system_id: str
    accelerators: tuple[AcceleratorSpec, ...]
    dram_energy_per_byte: float        # mJ per byte moved for a context switch
    sram_bytes: int = 8 * 1024 * 1024  # metadata only
    clock_hz: int = 700_000_000        # metadata only

    def __post_init__(self):
        if not self.accelerators:
            raise HardwareError(f"system {self.system_id}: needs at least one accelerator")
        ids = [a.accelerator_id for a in self.accelerators]
        if ids != list(range(len(ids))):
            raise HardwareError(f"system {self.system_id}: accelerator ids must be 0..n-1")
        if self.dram_energy_per_byte < 0:
            raise HardwareError(f"system {self.system_id}: dram_energy_per_byte must be >= 0")

    @property
    def n_accelerators(self) -> int:
        return len(self.accelerators)


def system_from_dict(doc: Mapping) -> SystemSpec:
    try:
        accs = tuple(
            AcceleratorSpec(accelerator_id=i, label=a["label"], dataflow=a["dataflow"],
                            pe_count=int(a["pe_count"]))
            for i, a in enumerate(doc["accelerators"]))
        return SystemSpec(
            system_id=doc.get("system_id", "system"),
            accelerators=accs,
            dram_energy_per_byte=float(doc["dram_energy_per_byte"]),
            sram_bytes=int(doc.get("sram_bytes", 8 * 1024 * 1024)),
            clock_hz=int(doc.get("clock_hz", 700_000_000)))
    except (KeyError, TypeError, ValueError) as exc:
        raise HardwareError(f"bad system config: {exc}") from exc


def load_system(path) -> SystemSpec:
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh.read())
    if not isinstance(doc, Mapping):
        raise HardwareError(f"system config {path}: document must be a mapping")
    return system_from_dict(doc)


class CostTable:
    """Latency/energy lookups for (model_id, layer_id, accelerator_id) triples."""

    def __init__(self, latency_ms: Mapping[tuple[str, int, int], float],
                 energy_mj: Mapping[tuple[str, int, int], float]):
        self._lat = dict(latency_ms)
        self._energy = dict(energy_mj)
        for key, v in self._lat.items():
            if v <= 0:
                raise CostTableError(f"latency for {key} must be > 0, got {v}")
        for key, v in self._energy.items():
            if v <= 0:
                raise CostTableError(f"energy for {key} must be > 0, got {v}")
        if set(self._lat) != set(self._energy):
            raise CostTableError("latency and energy tables cover different triples")

    def latency(self, model_id: str, layer_id: int, accelerator_id: int) -> float:
        try:
            return self._lat[(model_id, layer_id, accelerator_id)]
        except KeyError:
            raise CostTableError(
                f"no cost entry for model {model_id} layer {layer_id} "
                f"accelerator {accelerator_id}") from None

    def energy(self, model_id: str, layer_id: int, accelerator_id: int) -> float:
        try:
            return self._energy[(model_id, layer_id, accelerator_id)]
        except KeyError:
            raise CostTableError(
                f"no cost entry for model {model_id} layer {layer_id} "
                f"accelerator {accelerator_id}") from None

    def triples(self) -> Iterable[tuple[str, int, int]]:
        return self._lat.keys()

    def check_coverage(self, models: Sequence[ModelSpec], system: SystemSpec) -> None:
        """Fail fast if any (model, layer, accelerator) combination is missing."""
        for m in models:
            for l in m.layers:
                for a in system.accelerators:
                    self.latency(m.model_id, l.layer_id, a.accelerator_id)
                    self.energy(m.model_id, l.layer_id, a.accelerator_id)


def load_cost_table(text_or_file, models: Sequence[ModelSpec],
                    system: SystemSpec) -> CostTable:
    """Read the cost CSV and verify full coverage of the declared workload/system."""
    if hasattr(text_or_file, "read"):
        fh = text_or_file
    else:
        fh = io.StringIO(text_or_file)
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != COST_CSV_HEADER:
        raise CostTableError(
            f"cost table header must be {','.join(COST_CSV_HEADER)}, "
            f"got {reader.fieldnames}")
    lat: dict[tuple[str, int, int], float] = {}
    energy: dict[tuple[str, int, int], float] = {}
    for row_no, row in enumerate(reader, start=2):
        try:
            key = (row["model_id"], int(row["layer_id"]), int(row["accelerator_id"]))
            l = float(row["latency_ms"])
            e = float(row["energy_mj"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CostTableError(f"cost table row {row_no}: {exc}") from exc
        if key in lat:
            raise CostTableError(f"cost table row {row_no}: duplicate entry for {key}")
        if l <= 0 or e <= 0:
            raise CostTableError(
                f"cost table row {row_no}: latency and energy must be > 0 for {key}")
        lat[key] = l
        energy[key] = e
    table = CostTable(lat, energy)
    table.check_coverage(models, system)
    return table


def load_cost_table_file(path, models: Sequence[ModelSpec], system: SystemSpec) -> CostTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return load_cost_table(fh, models, system)


def write_cost_table(table: CostTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COST_CSV_HEADER)
        for key in sorted(table.triples()):
            writer.writerow([key[0], key[1], key[2],
                             repr(table.latency(*key)), repr(table.energy(*key))])


# ---------------------------------------------------------------------------
# synthetic cost generation

# dataflow/op affinity: >1 helps latency (more effective throughput),
# energy affinity scales mJ per work unit.
DEFAULT_LATENCY_AFFINITY: dict[tuple[str, str], float] = {
    ("WS", "conv"): 1.25, ("WS", "dwconv"): 0.75, ("WS", "fc"): 0.9,
    ("WS", "rnn"): 0.8, ("WS", "attention"): 0.85,
    ("OS", "conv"): 0.8, ("OS", "dwconv"): 1.2, ("OS", "fc"): 1.15,
    ("OS", "rnn"): 1.1, ("OS", "attention"): 1.05,
}

# deliberately opposed to the latency table: the accelerator that runs an op
# fastest pays more energy for it, so latency and energy preferences conflict
DEFAULT_ENERGY_AFFINITY: dict[tuple[str, str], float] = {
    ("WS", "conv"): 1.2, ("WS", "dwconv"): 0.85, ("WS", "fc"): 0.9,
    ("WS", "rnn"): 0.9, ("WS", "attention"): 0.95,
    ("OS", "conv"): 0.8, ("OS", "dwconv"): 1.15, ("OS", "fc"): 1.1,
    ("OS", "rnn"): 1.15, ("OS", "attention"): 1.05,
}


@dataclass(frozen=True)
class AffinityParams:
    """Knobs for the synthetic generator."""

    base_throughput: float = 2.0        # work units per ms per PE at affinity 1.0
    energy_per_work: float = 2.0e-4     # mJ per work unit at affinity 1.0
    latency_affinity: Mapping[tuple[str, str], float] = field(
        default_factory=lambda: dict(DEFAULT_LATENCY_AFFINITY))
    energy_affinity: Mapping[tuple[str, str], float] = field(
        default_factory=lambda: dict(DEFAULT_ENERGY_AFFINITY))
    jitter: float = 0.10                # +/- relative spread, deterministic from seed

    def lat_affinity(self, dataflow: str, op_kind: str) -> float:
        return self.latency_affinity.get((dataflow, op_kind), 1.0)

    def en_affinity(self, dataflow: str, op_kind: str) -> float:
        return self.energy_affinity.get((dataflow, op_kind), 1.0)


def generate_synthetic_costs(system: SystemSpec, models: Sequence[ModelSpec], seed: int,
                             affinity: Optional[AffinityParams] = None) -> CostTable:
    """Build a full cost table from PE counts and dataflow/op affinities.

    latency = work / (pe_count * base_throughput * affinity); energy scales with
    work through an independent affinity and never with PE count. The jitter
    factor is keyed by (model, layer, accelerator) so regenerating with a
    different PE count reuses the same draw.
    """
    aff = affinity if affinity is not None else AffinityParams()
    lat: dict[tuple[str, int, int], float] = {}
    energy: dict[tuple[str, int, int], float] = {}
    for mi, m in enumerate(models):
        for l in m.layers:
            for a in system.accelerators:
                key = (m.model_id, l.layer_id, a.accelerator_id)
                lj = 1.0 + aff.jitter * (
                    2.0 * unit_draw(seed, _LAT_JITTER_STREAM, mi, l.layer_id,
                                    a.accelerator_id) - 1.0)
                ej = 1.0 + aff.jitter * (
                    2.0 * unit_draw(seed, _ENERGY_JITTER_STREAM, mi, l.layer_id,
                                    a.accelerator_id) - 1.0)
                lat[key] = lj * l.work_units / (
                    a.pe_count * aff.base_throughput * aff.lat_affinity(a.dataflow, l.op_kind))
                energy[key] = ej * l.work_units * aff.energy_per_work * aff.en_affinity(
                    a.dataflow, l.op_kind)
    return CostTable(lat, energy)


# ---------------------------------------------------------------------------
# derived energies


@dataclass(frozen=True)
class PrevTaskInfo:
    """What the dispatcher needs to remember about the task that last ran
    on an accelerator: its identity and the activation footprint it leaves."""

    model_id: str
    frame_index: int
    out_bytes: float


def incoming_activation_bytes(model: ModelSpec, task: InferenceTask) -> float:
    """Input bytes of the task's next layer: the predecessor layer's activation
    in execution order, or the model's declared input size for the first layer."""
    if task.completed:
        last_layer_id = task.completed[-1][0]
        return model.layer(last_layer_id).activation_bytes
    return model.layer0_input_bytes()


def cswitch_energy(model: ModelSpec, task: InferenceTask, prev: Optional[PrevTaskInfo],
                   dram_energy_per_byte: float) -> float:
    """Context-switch energy on an accelerator: zero when the incoming task is
    the same (model, frame) as the previous one, else the incoming plus outgoing
    activation traffic through DRAM. Charges energy only, no latency."""
    if prev is None:
        return 0.0
    if prev.model_id == task.model_id and prev.frame_index == task.frame_index:
        return 0.0
    incoming = incoming_activation_bytes(model, task)
    return (incoming + prev.out_bytes) * dram_energy_per_byte


def worst_case_model_energy(table: CostTable, model: ModelSpec, system: SystemSpec,
                            variant_id: Optional[str] = None) -> float:
    """Sum over the variant's layers of the maximum energy across accelerators."""
    if variant_id is None or not model.variants:
        layer_ids = model.full_layer_ids()
    else:
        layer_ids = model.variant(variant_id).layer_ids
    if not layer_ids:
        raise ValueError(f"model {model.model_id}: variant with no layers")
    total = 0.0
    for lid in layer_ids:
        total += max(table.energy(model.model_id, lid, a.accelerator_id)
                     for a in system.accelerators)
    return total
