"""Shared builders for the test suite.

Most tests construct tiny scenarios inline from plain dicts; the helpers here
cover the recurring shapes: a system with a few accelerators, a cost table
from explicit per-triple values, and a simulation primed with hand-placed
tasks that no policy has touched yet.
"""

from __future__ import annotations

from dreamsched.hardware import AcceleratorSpec, CostTable, SystemSpec
from dreamsched.sim import SchedulerPolicy, Simulation


class HoldPolicy(SchedulerPolicy):
    """Never dispatches; for tests that drive the simulation by hand."""

    name = "hold"

    def on_trigger(self, sim):
        pass


def build_system(dataflows, pe_counts=None, dram=1e-7, system_id="testsys"):
    pes = pe_counts if pe_counts is not None else [16] * len(dataflows)
    accs = tuple(AcceleratorSpec(i, f"acc{i}", df, pe)
                 for i, (df, pe) in enumerate(zip(dataflows, pes)))
    return SystemSpec(system_id=system_id, accelerators=accs,
                      dram_energy_per_byte=dram)


def build_table(entries):
    """CostTable from {(model_id, layer_id, accelerator_id): (latency, energy)}."""
    lat = {k: v[0] for k, v in entries.items()}
    en = {k: v[1] for k, v in entries.items()}
    return CostTable(lat, en)


def prime_sim(scenario, system, costs, spawns, now=0.0):
    """Simulation under a never-dispatching policy with tasks spawned by hand.

    spawns is a list of (model_id, frame_index, anchor_ms); tasks get ids in
    list order. The clock is set before spawning so arrival times match it.
    """
    sim = Simulation(scenario, system, costs, HoldPolicy())
    sim.now = now
    for model_id, frame_index, anchor in spawns:
        sim._spawn_task(model_id, frame_index, anchor)
    return sim
