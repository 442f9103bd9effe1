import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import small_scenario
from hybridsim.scenario import (ScenarioValidationError, bundled_scenario_path,
                                load_valid_scenario, scenario_from_dict,
                                validate_scenario)
from hybridsim.sim import Simulation, SimulationAborted, run
from hybridsim.trace import COMPLETED, DROPPED, trace_digest


def topology(local_caps=(1.0,), cloud_cap=1.0, bw=100.0, delay=0.0):
    nodes = [{"id": f"local-{i}", "segment": "local", "serviceRatePerCapacity": 10.0,
              "capacity": c} for i, c in enumerate(local_caps)]
    nodes.append({"id": "cloud-0", "segment": "cloud", "serviceRatePerCapacity": 10.0,
                  "capacity": cloud_cap})
    return {
        "nodes": nodes,
        "links": [{"id": "wan", "endpoints": ["source", "cloud-0"], "bandwidth": bw,
                   "propagationDelaySec": delay, "qosShares": {"interactive": 0.3, "data": 0.5}}],
        "dispatcher": {"localNodes": [n["id"] for n in nodes[:-1]], "cloudNodes": ["cloud-0"],
                       "cloudLink": "wan"},
    }


def poisson(rate, mean_size=1.0, stream="src"):
    return {"kind": "poisson", "rate": rate, "seedStream": stream,
            "size": {"kind": "exponential", "mean": mean_size}}


STALL = 1e-9  # capacity so small that service never finishes within the horizon


# -- sample_state / actuate -------------------------------------------------

def test_empty_system_samples_zero_everywhere():
    tr = run(small_scenario(), seed=1)
    assert tr.conservation == {"generated": 0, "completed": 0, "dropped": 0, "in_flight": 0}
    assert tr.t.tolist() == list(range(21))
    assert np.all(tr.x == 0.0)


def test_stalled_local_queue_counts_requests():
    sim = Simulation(small_scenario(topology=topology(local_caps=(STALL,))), seed=0)
    sim.run_until(0.0)
    for _ in range(5):
        sim.submit(1.0, "data", route="local")
    assert sim.sample_state().tolist() == [5.0, 0.0, 0.0, 0.0]


def test_wan_utilization_half_busy_period():
    # two transfers of 25 units on a 100 unit/s link keep it busy for 0.5 of a 1 s period
    sim = Simulation(small_scenario(), seed=0)
    sim.run_until(0.0)
    sim.submit(25.0, "data", route="cloud")
    sim.submit(25.0, "data", route="cloud")
    tr = sim.run()
    assert tr.x[1, 2] == pytest.approx(0.5)
    assert tr.x[2, 2] == 0.0


@pytest.mark.parametrize("frac,route", [(0.0, "local"), (1.0, "cloud")])
def test_routing_fraction_extremes(frac, route):
    sc = small_scenario(traffic=[poisson(5.0)], controlLoop={"u0": [frac, 0.5, 1.0]})
    tr = run(sc, seed=3)
    assert tr.requests and {r.route for r in tr.requests} == {route}


def test_capacity_scale_halves_service_time():
    times = []
    for scale in (1.0, 2.0):
        sim = Simulation(small_scenario(), seed=0)
        sim.run_until(0.0)
        sim.actuate([1.0, 0.5, scale])
        req = sim.submit(1.0, "data", route="cloud")
        sim.run()
        times.append(req.completed_at - req.dispatched_at)
    assert times[0] == pytest.approx(0.1)
    assert times[1] == pytest.approx(times[0] / 2)


def test_wan_share_actuator_sets_data_share():
    sim = Simulation(small_scenario(), seed=0)
    sim.actuate([0.0, 0.7, 1.0])
    assert sim.links["wan"].shares["data"] == 0.7


# -- dispatch ---------------------------------------------------------------

def test_least_loaded_and_tie_break():
    sim = Simulation(small_scenario(topology=topology(local_caps=(1.0, 1.0))), seed=0)
    a, b = sim.nodes["local-0"], sim.nodes["local-1"]
    a.waiting, b.waiting = 3, 1
    assert sim.pick_node("local") is b
    a.waiting, b.waiting = 2, 2
    assert sim.pick_node("local") is a


def test_queue_limit_drops():
    topo = topology(local_caps=(STALL,))
    topo["nodes"][0]["queueLimit"] = 2
    sim = Simulation(small_scenario(topology=topo), seed=0)
    reqs = [sim.submit(1.0, "data", route="local") for _ in range(5)]
    # one in service, two waiting, the rest dropped
    assert [r.status for r in reqs][-2:] == [DROPPED, DROPPED]
    assert sim.trace().conservation["dropped"] == 2


def test_strict_priority_across_classes():
    sim = Simulation(small_scenario(), seed=0)
    first = sim.submit(1.0, "data", route="local")
    low = sim.submit(1.0, "data", route="local")
    high = sim.submit(1.0, "interactive", route="local")
    sim.run()
    assert first.completed_at < high.completed_at < low.completed_at


# -- duplication ------------------------------------------------------------

def test_stalled_request_duplicated_at_each_timeout():
    sc = small_scenario(topology=topology(local_caps=(STALL,)),
                        duplication={"dupTimeoutSec": 1.0, "maxDupDepth": 2})
    sim = Simulation(sc, seed=0)
    orig = sim.submit(1.0, "data", route="local")
    tr = sim.run()
    dups = [r for r in tr.requests if r.parent_id is not None]
    assert [d.created_at for d in dups] == [1.0, 2.0]
    assert dups[0].parent_id == orig.id and dups[1].parent_id == dups[0].id
    assert {d.root_id for d in dups} == {orig.id}
    assert tr.duplicate_count == 2


def test_fast_completion_means_no_duplicates():
    sc = small_scenario(duplication={"dupTimeoutSec": 1.0, "maxDupDepth": 2})
    sim = Simulation(sc, seed=0)
    sim.submit(1.0, "data", route="local")
    assert sim.run().duplicate_count == 0


def test_depth_zero_disables_duplication_under_overload():
    sc = small_scenario(traffic=[poisson(30.0)],
                        duplication={"dupTimeoutSec": 0.1, "maxDupDepth": 0})
    assert run(sc, seed=1).duplicate_count == 0


# -- physics ----------------------------------------------------------------

def mm1(rate, horizon, period=1.0):
    return small_scenario(horizonSec=horizon, traffic=[poisson(rate)],
                          controlLoop={"periodSec": period})


def test_mm1_utilization_law():
    util = [run(mm1(2.0, 1000.0), seed=s).node_busy["local-0"] / 1000.0 for s in range(5)]
    assert np.mean(util) == pytest.approx(0.2, rel=0.10)


def test_mm1_mean_number_in_system():
    # rho = 0.5 -> L = rho / (1 - rho) = 1, horizon 10000 / lambda
    lam = 5.0
    means = [run(mm1(lam, 10000 / lam), seed=s).x[:, 0].mean() for s in range(10)]
    assert np.mean(means) == pytest.approx(1.0, rel=0.15)


def test_conservation_causality_and_duplicate_bound_on_peak_scenario():
    sc = load_valid_scenario(bundled_scenario_path("canonical_peak"))
    tr = run(sc, seed=1, controller="none")
    c = tr.conservation
    assert c["generated"] == c["completed"] + c["dropped"] + c["in_flight"] == len(tr.requests)
    assert c["in_flight"] >= 0
    assert np.all(np.diff(tr.t) > 0)
    depth = {}
    for r in tr.requests:
        if r.dispatched_at is not None:
            assert r.created_at <= r.dispatched_at
        if r.status == COMPLETED:
            assert r.dispatched_at <= r.completed_at
        depth[r.root_id] = max(depth.get(r.root_id, 0), r.depth)
    assert max(depth.values()) <= sc.duplication.max_dup_depth
    assert tr.duplicate_count > 0


def test_determinism():
    sc = load_valid_scenario(bundled_scenario_path("canonical_peak"))
    assert trace_digest(run(sc, 5)) == trace_digest(run(sc, 5))
    assert trace_digest(run(sc, 5)) != trace_digest(run(sc, 6))


def test_paired_seeds_share_arrivals_across_controllers():
    sc = load_valid_scenario(bundled_scenario_path("canonical_peak"))
    a, b = run(sc, 2, "none"), run(sc, 2, "one-step")
    orig = lambda tr: [(r.created_at, r.size, r.qos_class) for r in tr.requests if r.parent_id is None]
    assert orig(a) == orig(b)


def test_doubling_load_does_not_reduce_duplicates():
    def mean_dups(rate):
        sc = small_scenario(horizonSec=60.0, traffic=[poisson(rate, mean_size=0.8)],
                            duplication={"dupTimeoutSec": 1.0, "maxDupDepth": 2})
        return np.mean([run(sc, seed=s).duplicate_count for s in range(10)])
    assert mean_dups(12.0) >= mean_dups(6.0)


@settings(max_examples=15)
@given(st.integers(0, 2**63 - 1), st.floats(0.5, 20.0), st.floats(0.0, 1.0))
def test_conservation_property(seed, rate, frac):
    sc = small_scenario(horizonSec=15.0, traffic=[poisson(rate)],
                        controlLoop={"u0": [frac, 0.5, 1.0]},
                        duplication={"dupTimeoutSec": 0.3, "maxDupDepth": 2})
    tr = run(sc, seed)
    c = tr.conservation
    assert c["generated"] == c["completed"] + c["dropped"] + c["in_flight"]
    assert all(r.depth <= 2 for r in tr.requests)


def test_event_budget_aborts_with_partial_trace():
    sc = small_scenario(traffic=[poisson(50.0)], maxEvents=100)
    with pytest.raises(SimulationAborted) as info:
        run(sc, seed=0)
    part = info.value.trace
    assert part.event_count == 100
    c = part.conservation
    assert c["generated"] == c["completed"] + c["dropped"] + c["in_flight"]


# -- validation -------------------------------------------------------------

def test_bundled_scenarios_validate():
    for name in ("canonical_peak", "migration", "identify_demo"):
        assert validate_scenario(load_valid_scenario(bundled_scenario_path(name))) == []


def test_missing_link_endpoint_and_share_sum_reported_together():
    topo = topology()
    topo["links"][0]["endpoints"] = ["source", "ghost"]
    topo["links"][0]["qosShares"] = {"interactive": 0.7, "data": 0.5}
    errors = validate_scenario(small_scenario(topology=topo))
    assert any("'wan'" in e and "'ghost'" in e for e in errors)
    assert any("1.2" in e for e in errors)


def test_simulation_refuses_invalid_scenario():
    sc = small_scenario(horizonSec=-1.0)
    with pytest.raises(ScenarioValidationError, match="horizonSec"):
        Simulation(sc, 0)
