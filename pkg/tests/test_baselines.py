"""Reference policies: arrival order, deadline order, and layer blocks."""

from __future__ import annotations

import pytest

from conftest import build_system, build_table, prime_sim
from dreamsched.baselines import (
    EdfScheduler,
    FcfsScheduler,
    LayerBlockScheduler,
    build_blocks,
)
from dreamsched.sim import run_simulation
from dreamsched.workload import scenario_from_dict

from test_workload import layer, model_d, scenario_d


def two_model_sim(policy_unused=None, deadlines=None, n_layers=1):
    models = [model_d("a", n_layers=n_layers, fps=50.0),
              model_d("b", n_layers=n_layers, fps=50.0)]
    spec = scenario_from_dict(scenario_d(models, deadline_policy=deadlines))
    costs = build_table({(m, l, 0): (2.0, 0.1)
                         for m in ("a", "b") for l in range(n_layers)})
    return prime_sim(spec, build_system(["WS"]), costs,
                     [("a", 0, 0.0), ("b", 0, 0.0)])


# --------------------------------------------------------------------- fcfs


def test_fcfs_takes_oldest_arrival_first():
    sim = two_model_sim()
    sim.tasks[0].arrival_time = 5.0  # b (task 1, arrival 0) is now older
    FcfsScheduler().on_trigger(sim)
    assert sim.runlog.decisions[0].model_id == "b"


def test_fcfs_chains_the_whole_model_on_one_accelerator():
    spec = scenario_from_dict(scenario_d([model_d("a", n_layers=3, fps=10.0)],
                                         duration_s=0.05))
    costs = build_table({("a", l, a): (2.0 + a, 0.1)
                         for l in range(3) for a in range(2)})
    runlog = run_simulation(spec, build_system(["WS", "OS"]), costs,
                            FcfsScheduler())
    assert [d.layer_id for d in runlog.decisions] == [0, 1, 2]
    assert len({d.accelerator_id for d in runlog.decisions}) == 1
    # back to back: each layer starts the instant the previous one ends
    for prev, nxt in zip(runlog.decisions, runlog.decisions[1:]):
        assert nxt.time == prev.time + prev.latency_ms


def test_fcfs_prefers_lowest_numbered_idle_accelerator():
    spec = scenario_from_dict(scenario_d([model_d("a", fps=50.0)]))
    costs = build_table({("a", 0, 0): (9.0, 0.1), ("a", 0, 1): (1.0, 0.1)})
    sim = prime_sim(spec, build_system(["WS", "OS"]), costs, [("a", 0, 0.0)])
    FcfsScheduler().on_trigger(sim)
    # arrival order scheduling ignores per-accelerator speed entirely
    assert sim.runlog.decisions[0].accelerator_id == 0


def test_fcfs_holds_when_no_accelerator_is_idle():
    sim = two_model_sim()
    sim.accelerators[0].busy_until = 50.0
    FcfsScheduler().on_trigger(sim)
    assert sim.runlog.decisions == []


def test_fcfs_full_run_matches_arrival_sort():
    spec = scenario_from_dict(scenario_d(
        [model_d("a", fps=40.0), model_d("b", fps=25.0)], duration_s=0.2))
    costs = build_table({(m, 0, 0): (3.0, 0.1) for m in ("a", "b")})
    runlog = run_simulation(spec, build_system(["WS"]), costs, FcfsScheduler())
    dispatched = [(d.model_id, d.frame_index) for d in runlog.decisions]
    arrivals = sorted(runlog.frames, key=lambda f: (f.arrival, f.task_id))
    assert dispatched == [(f.model_id, f.frame_index) for f in arrivals]


# ---------------------------------------------------------------------- edf


def test_edf_takes_earliest_deadline_first():
    sim = two_model_sim(deadlines={"a": 30.0, "b": 10.0})
    EdfScheduler().on_trigger(sim)
    assert sim.runlog.decisions[0].model_id == "b"


def test_edf_breaks_deadline_ties_by_task_id():
    sim = two_model_sim(deadlines={"a": 30.0, "b": 30.0})
    EdfScheduler().on_trigger(sim)
    assert sim.runlog.decisions[0].task_id == 0


def test_edf_picks_fastest_idle_accelerator():
    spec = scenario_from_dict(scenario_d([model_d("a", fps=50.0)]))
    costs = build_table({("a", 0, 0): (2.0, 0.1), ("a", 0, 1): (4.0, 0.1)})
    system = build_system(["WS", "OS"])
    sim = prime_sim(spec, system, costs, [("a", 0, 0.0)])
    EdfScheduler().on_trigger(sim)
    assert sim.runlog.decisions[0].accelerator_id == 0

    # fastest accelerator busy: the slower idle one gets the layer
    sim = prime_sim(spec, system, costs, [("a", 0, 0.0)])
    sim.accelerators[0].busy_until = 50.0
    EdfScheduler().on_trigger(sim)
    assert sim.runlog.decisions[0].accelerator_id == 1


# --------------------------------------------------------------- layerblock


def block_model(works=(0.4, 0.4, 0.4)):
    m = model_d("a", fps=10.0)
    m["layers"] = [layer(i, work=w) for i, w in enumerate(works)]
    return m


def block_sim(lat_per_layer, theta_ms=1.0):
    spec = scenario_from_dict(scenario_d([block_model([10.0] * len(lat_per_layer))],
                                         duration_s=0.1))
    costs = build_table({("a", i, 0): (lat, 0.1)
                         for i, lat in enumerate(lat_per_layer)})
    return prime_sim(spec, build_system(["WS"]), costs, [("a", 0, 0.0)])


def test_block_partition_respects_theta():
    sim = block_sim([0.4, 0.4, 0.4])
    model = sim.scenario.model("a")
    assert build_blocks(model, sim, 1.0) == [3]
    assert build_blocks(model, sim, 0.5) == [2, 1]
    assert build_blocks(model, sim, 100.0) == [3]
    assert build_blocks(model, sim, 0.1) == [1, 1, 1]
    with pytest.raises(ValueError):
        build_blocks(model, sim, 0.0)


def test_block_partition_covers_every_layer_once():
    for lats in ([1.0], [0.3, 0.9, 2.0, 0.1], [5.0, 5.0, 5.0, 5.0, 5.0]):
        sim = block_sim(lats)
        model = sim.scenario.model("a")
        for theta in (0.25, 1.0, 3.0, 50.0):
            assert sum(build_blocks(model, sim, theta)) == len(lats)


def test_blocks_run_uninterrupted_on_one_accelerator():
    spec = scenario_from_dict(scenario_d([block_model([10.0] * 4)],
                                         duration_s=0.1))
    costs = build_table({("a", i, acc): (0.6, 0.1)
                         for i in range(4) for acc in range(2)})
    runlog = run_simulation(spec, build_system(["WS", "OS"]), costs,
                            LayerBlockScheduler(theta_ms=1.0))
    # theta 1.0 over 0.6 ms layers gives blocks of two
    first, second = runlog.decisions[:2], runlog.decisions[2:]
    assert [d.layer_id for d in runlog.decisions] == [0, 1, 2, 3]
    assert len({d.accelerator_id for d in first}) == 1
    assert len({d.accelerator_id for d in second}) == 1
    assert first[1].time == first[0].time + first[0].latency_ms


def test_layerblock_picks_accelerator_by_block_latency():
    # accelerator 1 wins layer 0 but loses the two-layer block
    spec = scenario_from_dict(scenario_d([block_model([10.0, 10.0])],
                                         duration_s=0.1))
    costs = build_table({("a", 0, 0): (0.7, 0.1), ("a", 0, 1): (0.5, 0.1),
                         ("a", 1, 0): (0.4, 0.1), ("a", 1, 1): (0.9, 0.1)})
    sim = prime_sim(spec, build_system(["WS", "OS"]), costs, [("a", 0, 0.0)])
    policy = LayerBlockScheduler(theta_ms=1.0)
    policy.bind(sim)
    policy.on_trigger(sim)
    assert sim.runlog.decisions[0].accelerator_id == 0


def test_baselines_never_drop_or_switch():
    m = model_d("s", fps=60.0)
    m["layers"] = [layer(0, work=10.0), layer(1, work=8.0), layer(2, work=6.0)]
    m["variants"] = [
        {"variant_id": "original", "layer_ids": [0, 1, 2], "relative_flops": 1.0},
        {"variant_id": "slim", "layer_ids": [0], "relative_flops": 0.4},
    ]
    m["switch_point"] = 1
    spec = scenario_from_dict(scenario_d([m], duration_s=0.2))
    # heavy overload: latency 25 ms against a 16.7 ms period
    costs = build_table({("s", i, 0): (25.0, 0.1) for i in range(3)})
    for policy in (FcfsScheduler(), EdfScheduler(), LayerBlockScheduler()):
        runlog = run_simulation(spec, build_system(["WS"]), costs, policy)
        assert runlog.drops == []
        assert all(f.variant_id == "original" for f in runlog.frames)
