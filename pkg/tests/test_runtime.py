import math

import pytest
from oracles import min_blockers

from adscoord import fixtures
from adscoord.dynamics import KinematicParams, VehicleState, min_free_space
from adscoord.mapgraph import Route, parse_map
from adscoord.rules import Matcher, World, builtin_rules, to_limit_form
from adscoord.runtime import (
    Allocation,
    CapacityPreconditionError,
    CriticalPath,
    PolicyTrace,
    ScenarioRejected,
    capacity,
    check_consistency,
    check_invariant,
    check_load,
    check_runtime_contract,
    critical_paths,
    free_space_policy,
    initial_allocation,
    limit_monotone,
)
from adscoord.verdict import FAIL, PASS, VACUOUS

P = KinematicParams(2.5, 3.4, 1.0)

ROAD = """
vertex A 0 0
vertex B
vertex C
edge e1 A B speed=10 seg=line:40:0
edge e2 B C speed=10 seg=line:40:0
"""


@pytest.fixture
def road():
    return parse_map(ROAD)


@pytest.fixture
def matcher():
    return Matcher([to_limit_form(r) for r in builtin_rules()])


def vehicle(m, vid, edges, odo, speed=0.0):
    return VehicleState(vid, Route(m, edges), odo, speed, P)


def policy(m, vehicles, limits, matcher, stops=None):
    w = World(m, vehicles, stops or {}, {}, {}, limits)
    trace = PolicyTrace()
    return free_space_policy(w, Allocation(limits, 0), matcher, trace), trace


# --- initial allocation and consistency ---------------------------------------

def test_initial_allocation_stopped(road):
    vs = {"a": vehicle(road, "a", ["e1", "e2"], 0.0), "b": vehicle(road, "b", ["e1", "e2"], 20.0)}
    assert initial_allocation(vs, road, {}).limits == {"a": 0.0, "b": 20.0}


def test_initial_allocation_rejects_shared_position(road):
    vs = {"a": vehicle(road, "a", ["e1"], 5.0), "b": vehicle(road, "b", ["e1"], 5.0)}
    with pytest.raises(ScenarioRejected, match="same position"):
        initial_allocation(vs, road, {})


def test_initial_allocation_rejects_stop_inside_braking(road):
    vs = {"a": vehicle(road, "a", ["e1", "e2"], 0.0, speed=10.0)}
    with pytest.raises(ScenarioRejected, match="no-stop-between"):
        initial_allocation(vs, road, {"s": road.position("e1", 5.0)})


def test_consistency_clauses(road):
    v = {"a": vehicle(road, "a", ["e1", "e2"], 0.0)}
    assert check_consistency(v, Allocation({"a": 0.0}), road, {}).ok
    bad = check_consistency(v, Allocation({"a": 10.0}), road, {"s": road.position("e1", 5.0)})
    assert bad.failures[0][1] == "no-stop-between"
    # speed(e1)=10 gives B=14.7 m < 20 m
    assert check_consistency(v, Allocation({"a": 20.0}), road, {}).failures[0][1] == "current-edge-speed"


# --- free-space policy --------------------------------------------------------

def test_follower_limit_is_leader_position(matcher):
    # speed limit 20 keeps the speed-limit bound (58.8 m) out of the way
    fast = parse_map(ROAD.replace("speed=10", "speed=20"))
    vs = {"c1": vehicle(fast, "c1", ["e1", "e2"], 5.0), "c2": vehicle(fast, "c2", ["e1", "e2"], 25.0)}
    new, trace = policy(fast, vs, {"c1": 5.0, "c2": 25.0}, matcher)
    assert new.limits["c1"] == 25.0
    assert new.limits["c1"] - vs["c1"].odo == 20.0
    assert trace.source["c1"] == "r1"


def test_edge_end_guard(road, matcher):
    vs = {"c": vehicle(road, "c", ["e1", "e2"], 0.0)}
    new, trace = policy(road, vs, {"c": 4.0}, matcher)
    # far from post(e1) the speed-limit bound pos + B(10) wins
    assert new.limits["c"] == pytest.approx(100 / 6.8)
    vs = {"c": vehicle(road, "c", ["e1", "e2"], 30.0)}
    new, trace = policy(road, vs, {"c": 34.0}, matcher)
    assert new.limits["c"] == 40.0
    assert trace.source["c"].startswith("guard")


def test_itinerary_end_clips(road, matcher):
    vs = {"c": vehicle(road, "c", ["e2"], 35.0)}
    new, _ = policy(road, vs, {"c": 35.0}, matcher)
    assert new.limits["c"] == 40.0


def test_merger_priority_keeps_lower_at_vertex(matcher):
    m = parse_map(fixtures.map_text("merger"))
    a3, b3 = m.edges["a3"].length, m.edges["b3"].length
    vs = {
        "hi": vehicle(m, "hi", ["a3", "c"], a3 - 5.0, speed=0.0),
        "lo": vehicle(m, "lo", ["b3", "c"], b3 - 5.0, speed=0.0),
    }
    limits = {"hi": a3, "lo": b3}
    new, trace = policy(m, vs, limits, matcher)
    assert new.limits["lo"] == b3
    assert trace.source["lo"] == "r4ii"
    assert new.limits["hi"] > a3


def test_policy_is_deterministic(road, matcher):
    vs = {"c1": vehicle(road, "c1", ["e1", "e2"], 5.0, 3.0), "c2": vehicle(road, "c2", ["e1", "e2"], 25.0, 2.0)}
    limits = {"c1": 10.0, "c2": 30.0}
    assert policy(road, vs, limits, matcher)[0] == policy(road, vs, limits, matcher)[0]


# --- contract monitors --------------------------------------------------------

def test_monotone(road):
    a = Allocation({"x": 5.0, "y": 9.0})
    assert limit_monotone(a, a).status == PASS
    v = limit_monotone(a, Allocation({"x": 5.0, "y": 8.0}))
    assert v.status == FAIL and "y" in v.detail


def _moved(m, vid, odo, delta, speed=0.0):
    return VehicleState(vid, Route(m, ["e1", "e2"]), odo + delta, speed, P, displacement=delta)


def test_runtime_contract_pass(road):
    vs = {"a": _moved(road, "a", 0.0, 2.0), "b": _moved(road, "b", 20.0, 0.0)}
    pre, post = Allocation({"a": 10.0, "b": 25.0}), Allocation({"a": 12.0, "b": 26.0})
    assert check_runtime_contract(vs, {"a": 0.0, "b": 20.0}, pre, post, road).status == PASS


def test_runtime_contract_shrink(road):
    vs = {"a": _moved(road, "a", 0.0, 2.0)}
    v = check_runtime_contract(vs, {"a": 0.0}, Allocation({"a": 10.0}), Allocation({"a": 9.0}), road)
    assert v.status == FAIL and v.clause == "free-space-shrinks"


def test_runtime_contract_overlap(road):
    vs = {"a": _moved(road, "a", 0.0, 0.0), "b": _moved(road, "b", 20.0, 0.0)}
    v = check_runtime_contract(vs, {"a": 0.0, "b": 20.0}, Allocation({"a": 5.0, "b": 25.0}), Allocation({"a": 22.0, "b": 25.0}), road)
    assert v.status == FAIL and v.clause == "non-crossing" and "e1" in v.detail


def test_runtime_contract_vacuous_when_vehicle_overshoots(road):
    vs = {"a": _moved(road, "a", 0.0, 6.0)}
    v = check_runtime_contract(vs, {"a": 0.0}, Allocation({"a": 5.0}), Allocation({"a": 8.0}), road)
    assert v.status == VACUOUS


def test_invariant_speed_clause(road):
    vs = {"a": vehicle(road, "a", ["e1"], 0.0, speed=6.8)}
    speed, crossing = check_invariant(vs, Allocation({"a": 5.0}), road)
    assert speed.status == FAIL and crossing.status == PASS


# --- critical paths and capacity ----------------------------------------------

def test_capacity_two_junction_circuit():
    m = parse_map(fixtures.map_text("capacity2"))
    paths, truncated = critical_paths(m)
    assert not truncated
    circuit = next(p for p in paths if p.kind == "circuit")
    assert circuit.junctions == 2
    assert capacity(circuit, 10.0, m) == 5


def test_return_path_found():
    m = parse_map(fixtures.map_text("capacity2"))
    paths, _ = critical_paths(m)
    returns = [p for p in paths if p.kind == "return"]
    assert [p.edges for p in returns] == [("ja", "fq", "xa")]
    assert capacity(returns[0], 10.0, m) == 2


def test_figure_eight_has_return_paths():
    m = parse_map(fixtures.map_text("allway"))
    kinds = {p.kind for p in critical_paths(m)[0]}
    assert "return" in kinds


def test_ring_single_circuit():
    m = parse_map(fixtures.map_text("ring"))
    paths, _ = critical_paths(m)
    assert len(paths) == 1 and paths[0].kind == "circuit" and paths[0].junctions == 0
    assert capacity(paths[0], min_free_space(P), m) == 7


def test_acyclic_map_has_no_critical_paths(road):
    assert critical_paths(road) == ([], False)


def test_junction_only_path():
    m = parse_map(fixtures.map_text("capacity2"))
    assert capacity(CriticalPath(("ja", "jb"), "circuit", 3), 10.0, m) == 2


def test_capacity_precondition():
    m = parse_map(fixtures.map_text("ring"))
    (path,), _ = critical_paths(m)
    with pytest.raises(CapacityPreconditionError, match="q0"):
        capacity(path, 7.0, m)


def test_capacity_matches_blocking_oracle():
    m = parse_map(fixtures.map_text("ring"))
    (path,), _ = critical_paths(m)
    for fmin in (min_free_space(P), 1.0, 1.5, 2.9, 4.0):
        oracle = path.junctions + sum(min_blockers(m.edges[e].length, fmin) for e in path.edges) - 1
        assert capacity(path, fmin, m) == oracle


def test_load_check():
    m = parse_map(fixtures.map_text("ring"))
    (path,), _ = critical_paths(m)
    kappa = capacity(path, min_free_space(P), m)
    assert check_load([], [path], [kappa]).status == PASS
    full = [VehicleState(f"r{i}", Route(m, ["q0"]), 0.0, 0.0, P) for i in range(kappa)]
    assert check_load(full, [path], [kappa]).status == FAIL


def test_load_ignores_vehicles_off_paths(road):
    m = parse_map(fixtures.map_text("ring"))
    (path,), _ = critical_paths(m)
    off = [VehicleState(f"x{i}", Route(road, ["e1"]), 0.0, 0.0, P) for i in range(50)]
    assert check_load(off, [path], [7]).status == PASS


def test_min_free_space_value():
    assert math.isclose(min_free_space(P), 2.1691, abs_tol=1e-4)
