import io
import json

import pytest

from adscoord import fixtures
from adscoord.runtime import Allocation
from adscoord.sim import (
    LoadError,
    Simulation,
    TraceError,
    check_trace,
    load_scenario,
    parse_scenario,
    read_trace,
    run,
)

ROAD = """
vertex A 0 0
vertex B
vertex C
edge e1 A B speed=10 seg=line:100:0
edge e2 B C speed=10 seg=line:100:0
"""


def scenario(body, cycles=50):
    return load_scenario(ROAD, f"dt=1\ncycles={cycles}\n{body}")


def trace_of(sc, **kw):
    buf = io.StringIO()
    result = run(sc, buf, **kw)
    return buf.getvalue(), result


# --- loading ------------------------------------------------------------------

def test_shipped_scenarios_load():
    for name in fixtures.SCENARIOS:
        sc = fixtures.load(name)
        assert sc.vehicles


def test_itinerary_repeat():
    spec = parse_scenario("dt=1\ncycles=1\nvehicle v at e1:0 amax=1 bmax=1 itinerary=e1,e2*3\n")
    assert spec.vehicles[0].itinerary == ("e1", "e2") * 3


def test_vehicle_off_first_edge():
    with pytest.raises(LoadError, match="first edge"):
        scenario("vehicle v at e2:5 speed=0 amax=2.5 bmax=3.4 itinerary=e1,e2")


def test_speed_limit_incompatible():
    with pytest.raises(LoadError, match="speed limits"):
        load_scenario(
            ROAD.replace("e1 A B speed=10", "e1 A B speed=40"),
            "dt=1\ncycles=5\nvehicle v at e1:0 speed=0 amax=2.5 bmax=3.4 itinerary=e1,e2\n",
        )


def test_missing_dt():
    with pytest.raises(LoadError, match="dt"):
        load_scenario(ROAD, "cycles=5\n")


def test_unknown_declaration_reports_line():
    with pytest.raises(LoadError, match="line 3"):
        load_scenario(ROAD, "dt=1\ncycles=5\nbicycle b at e1:0\n")


# --- single cycles --------------------------------------------------------------

def test_lone_vehicle_accelerates():
    sim = Simulation(scenario("vehicle v at e1:0 speed=0 amax=2.5 bmax=3.4 itinerary=e1,e2"))
    # a stopped vehicle starts with no free space, so it holds until the first allocation
    snap, _ = sim.step()
    assert snap.regions["v"] == "hold"
    assert snap.alloc.free(snap.vehicles["v"]) > 2.1691
    snap, verdicts = sim.step()
    assert snap.regions["v"] == "accelerate"
    assert snap.vehicles["v"].speed == 2.5
    assert all(v.ok for v in verdicts.values())


def test_follower_brakes_to_stop():
    # follower at 3.4 m/s has exactly B(3.4) = 1.7 m to the leader
    sc = scenario(
        "vehicle lead at e1:11.7 speed=0 amax=2.5 bmax=3.4 itinerary=e1,e2\n"
        "vehicle fol at e1:10 speed=3.4 amax=2.5 bmax=3.4 itinerary=e1,e2"
    )
    assert sc.alloc.free(sc.vehicles["fol"]) == pytest.approx(1.7)
    sim = Simulation(sc)
    snap, verdicts = sim.step()
    assert snap.regions["fol"] == "brake"
    assert snap.moved["fol"].speed == 0.0
    assert snap.moved["fol"].displacement == pytest.approx(1.7)
    assert all(v.ok for v in verdicts.values())


def test_all_arrived():
    sc = scenario("vehicle v at e2:90 speed=0 amax=2.5 bmax=3.4 itinerary=e2", cycles=100)
    _, result = trace_of(sc)
    assert result.reason == "all-arrived"
    assert result.records < 100


def test_waiting_time_bookkeeping():
    sc = scenario(
        "stop s at e2:0\n"
        "vehicle v at e1:99 speed=0 amax=2.5 bmax=3.4 itinerary=e1,e2",
        cycles=12,
    )
    text, _ = trace_of(sc)
    _, records, _ = read_trace(text.splitlines())
    for rec in records:
        r = rec["vehicles"]["v"]
        assert r["waiting"] == r["wait_cycles"] * 1.0
    assert any(rec["vehicles"]["v"]["wait_cycles"] > 0 for rec in records)


# --- whole runs ---------------------------------------------------------------

def test_trace_shape():
    text, result = trace_of(fixtures.load("follower"), cycles=20)
    head, records, summary = read_trace(text.splitlines())
    assert head["format"].startswith("adscoord-trace")
    assert [r["cycle"] for r in records] == list(range(20))
    assert summary["reason"] == result.reason == "budget"
    assert set(records[0]["verdicts"]) == set(head["monitors"])
    assert any(name.startswith("rule:") for name in head["monitors"])


def test_determinism():
    a, _ = trace_of(fixtures.load("demo5"), cycles=60)
    b, _ = trace_of(fixtures.load("demo5"), cycles=60)
    assert a == b


def test_check_round_trip():
    text, _ = trace_of(fixtures.load("allway"), cycles=80)
    assert check_trace(text.splitlines()) == []


def test_check_detects_tampering():
    lines, _ = trace_of(fixtures.load("follower"), cycles=10)
    lines = lines.splitlines()
    rec = json.loads(lines[5])
    vid = sorted(rec["vehicles"])[0]
    rec["vehicles"][vid]["free"] += 0.5
    lines[5] = json.dumps(rec)
    problems = check_trace(lines)
    assert any("free_space" in p for p in problems)


def test_check_rejects_truncated_trace():
    lines, _ = trace_of(fixtures.load("follower"), cycles=10)
    with pytest.raises(TraceError):
        check_trace(lines.splitlines()[:-2])


def test_forged_allocation_is_caught():
    def greedy(alloc, snap):
        return Allocation({vid: v.route.total for vid, v in snap.vehicles.items()}, alloc.cycle)

    _, result = trace_of(fixtures.load("demo5"), cycles=20, forge=greedy)
    assert result.reason == "violation"
    assert result.violations["invariant-noncrossing"] == 1


def test_over_capacity_ring_deadlocks():
    _, result = trace_of(fixtures.load("ring_over"))
    assert result.reason == "deadlock-window"
    assert result.records == 50


@pytest.mark.parametrize("name", ["follower", "allway", "merger", "speedlimits"])
def test_fixture_runs_clean(name):
    _, result = trace_of(fixtures.load(name), cycles=200)
    assert result.reason == "budget"
    assert not any(result.violations.values())


# --- known counterexamples ----------------------------------------------------

def test_merger_load_breaks_monotonicity():
    _, result = trace_of(fixtures.load("merger_load"))
    assert result.reason == "violation"
    assert result.violations["limit-monotone"] == 1


def test_allway_queue_deadlocks_at_stop_line():
    _, result = trace_of(fixtures.load("allway_queue"))
    assert result.reason == "deadlock-window"
    assert result.violations["progress"] == 1
