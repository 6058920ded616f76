import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_distance, random_map, random_position

from adscoord.geometry import Line, Segment
from adscoord.mapgraph import (
    ConfigurationError,
    Edge,
    MapError,
    MapGraph,
    Ride,
    Route,
    advance,
    ahead,
    check_speed_limit_compatibility,
    infer_junctions,
    parse_map,
    validate_2d,
)

CHAIN = """
vertex A 0 0
vertex B
vertex C
edge e1 A B speed=10 seg=line:10:0
edge e2 B C speed=10 seg=line:10:0
"""


@pytest.fixture
def chain():
    return parse_map(CHAIN)


def test_position_normalization(chain):
    assert chain.position("e1", 0) == chain.vertex("A")
    assert chain.position("e1", 10) == chain.vertex("B")
    assert chain.position("e1", 10) != chain.position("e2", 0.5)
    with pytest.raises(ValueError):
        chain.position("e1", 11)


def test_advance(chain):
    p = chain.position("e1", 2)
    assert advance(chain, p, ["e1", "e2"], 0) == p
    assert advance(chain, p, ["e1", "e2"], 5) == chain.position("e1", 7)
    assert advance(chain, chain.position("e1", 8), ["e1", "e2"], 5) == chain.position("e2", 3)
    with pytest.raises(ValueError):
        advance(chain, p, ["e1", "e2"], 30)


def test_advance_associative(chain):
    it = ["e1", "e2"]
    p = chain.position("e1", 1)
    q = advance(chain, p, it, 4.5)
    rest = it if q.edge == "e1" else it[1:]
    assert advance(chain, q, rest, 7) == advance(chain, p, it, 11.5)


def test_distance(chain):
    p = chain.position("e1", 2)
    assert chain.distance(p, p) == 0
    assert chain.distance(p, chain.position("e1", 7)) == 5
    assert chain.distance(p, chain.position("e2", 3)) == 11
    assert chain.distance(chain.vertex("B"), chain.vertex("A")) == math.inf


def test_ahead(chain):
    p = chain.position("e1", 2)
    r = ahead(chain, p, ["e1", "e2"], 0)
    assert r.pieces == (("e1", 2, 2),)
    assert ahead(chain, p, ["e1", "e2"], 5).pieces == (("e1", 2, 7),)
    r = ahead(chain, chain.position("e1", 8), ["e1", "e2"], 5)
    assert r.pieces == (("e1", 8, 10), ("e2", 0, 3))
    assert r.length == pytest.approx(5)


CROSS = """
vertex W -10 0
vertex E 10 0
vertex S 0 -10
vertex N 0 10
edge we W E speed=10 seg=line:20:0
edge sn S N speed=10 seg=line:20:1.5707963267948966
edge en E N speed=10 seg=line:14.142135623730951:2.356194490192345
"""


def test_non_crossing_examples(chain):
    m = parse_map(CROSS)
    r = lambda e, lo, hi, mm=m: Ride(((e, lo, hi),), mm.position(e, lo), mm.position(e, hi))
    rc = lambda e, lo, hi: r(e, lo, hi, chain)
    assert chain.non_crossing([rc("e1", 0, 5), rc("e2", 1, 2)])[0]
    assert chain.non_crossing([rc("e1", 0, 5), rc("e1", 5, 8)])[0]
    ok, why = m.non_crossing([r("we", 0, 5), r("sn", 1, 2)])
    assert not ok and "junction" in why
    assert not chain.non_crossing([rc("e1", 0, 5), rc("e1", 4, 8)])[0]


def test_non_crossing_symmetric_random(chain):
    rng = random.Random(7)
    route = Route(chain, ["e1", "e2"])
    for _ in range(300):
        a1, a2 = sorted(rng.uniform(0, 20) for _ in range(2))
        b1, b2 = sorted(rng.uniform(0, 20) for _ in range(2))
        r1, r2 = route.ride(a1, a2), route.ride(b1, b2)
        assert chain.non_crossing([r1, r2])[0] == chain.non_crossing([r2, r1])[0]
        shared = min(a2, b2) - max(a1, b1)
        if shared > 1e-3:
            assert not chain.non_crossing([r1, r2])[0]


def test_validate_triangle_and_single_edge():
    tri = parse_map(
        """
        vertex A 0 0
        vertex B
        vertex C
        edge ab A B speed=5 seg=line:10:0
        edge bc B C speed=5 seg=line:10:2.0943951023931957
        edge ca C A speed=5 seg=line:10:4.1887902047863905
        """
    )
    assert not validate_2d(tri)
    one = parse_map("vertex A 0 0\nvertex B\nedge e A B speed=5 seg=line:3:0\n")
    assert not validate_2d(one)


def test_validate_reports_mismatch():
    m = parse_map(
        """
        vertex A 0 0
        vertex B
        edge p A B speed=5 seg=line:10:0
        edge q A B speed=5 seg=line:11:0
        """
    )
    rep = validate_2d(m)
    assert rep.mismatched and rep.mismatched[0][0] == "B"
    assert rep.mismatched[0][1] == pytest.approx(1.0)


def test_unseeded_embedding_rejected():
    with pytest.raises(ConfigurationError):
        parse_map("vertex A\nvertex B\nedge e A B speed=5 seg=line:3:0\n")


def test_disconnected_rejected():
    with pytest.raises(MapError):
        parse_map("vertex A 0 0\nvertex B 5 5\n")


def test_infer_junctions():
    assert infer_junctions(parse_map(CROSS)) == [("sn", "we")]
    def line(name, a, b, pa, pb):
        dx, dy = pb[0] - pa[0], pb[1] - pa[1]
        return f"edge {name} {a} {b} speed=10 seg=line:{math.hypot(dx, dy)!r}:{math.atan2(dy, dx)!r}\n"

    pts = {"W": (-10, 0), "E": (10, 0), "S": (0, -10), "N": (0, 10), "SW": (-7, -7), "NE": (7, 7), "SE": (7, -7), "NW": (-7, 7)}
    text = "".join(f"vertex {v} {x} {y}\n" for v, (x, y) in pts.items())
    for name, a, b in [("we", "W", "E"), ("sn", "S", "N"), ("d1", "SW", "NE"), ("d2", "SE", "NW"),
                       ("f1", "SW", "W"), ("f2", "S", "SW"), ("f3", "S", "SE")]:
        text += line(name, a, b, pts[a], pts[b])
    x4 = parse_map(text)
    assert infer_junctions(x4) == [("d1", "d2", "sn", "we")]
    assert infer_junctions(parse_map(CHAIN)) == []


def test_declared_junction_overrides():
    m = parse_map(CROSS + "vertex Z 30 0\nedge ez E Z speed=10 seg=line:20:0\njunction we ez\npriority N: sn > en\n")
    assert m.junctions == [("ez", "we")]


def _fmt(text, length):
    x = length + 5
    return text.format(L=length, X=x, H=math.hypot(5, 12), P=math.atan2(12, -5))


def test_speed_limit_compatibility():
    text = """
    vertex A 0 0
    vertex B
    vertex C
    vertex D {X} -12
    vertex F {X} 12
    edge in A B speed=10 seg=line:{L}:0
    edge over B C speed=10 seg=line:10:0
    edge cross D F speed=10 seg=line:24:1.5707963267948966
    edge link C F speed=10 seg=line:{H}:{P}
    """
    ok = parse_map(_fmt(text, 20))
    assert ok.junctions == [("cross", "over")]
    assert check_speed_limit_compatibility(ok, {"c": 3.4}) == []
    bad = parse_map(_fmt(text, 10))
    issues = check_speed_limit_compatibility(bad, {"c": 3.4})
    assert any("edge in" in s for s in issues)


def test_priority_required_at_merger():
    text = """
    vertex A 0 0
    vertex B 0 10
    vertex U 10 0
    edge a A U speed=5 seg=line:10:0
    edge b B U speed=5 seg=line:14.142135623730951:-0.7853981633974483
    """
    with pytest.raises(MapError):
        parse_map(text)
    m = parse_map(text + "priority U: a > b\n")
    assert m.lower_priority("U", "b", "a")
    assert not m.lower_priority("U", "a", "b")


def test_entry_order_transitive():
    m = parse_map(CHAIN + "entry_order A < B\nentry_order B < C\n")
    assert m.entry_before("A", "C")
    assert not m.entry_before("C", "A")


def test_distance_matches_brute_force_small():
    rng = random.Random(11)
    for _ in range(40):
        m = random_map(rng)
        for _ in range(5):
            p, q = random_position(rng, m), random_position(rng, m)
            assert m.distance(p, q) == brute_distance(m, p, q)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_triangle_inequality(seed):
    rng = random.Random(seed)
    m = random_map(rng)
    p, q, r = (random_position(rng, m) for _ in range(3))
    dpq, dqr, dpr = m.distance(p, q), m.distance(q, r), m.distance(p, r)
    if math.isfinite(dpq) and math.isfinite(dqr):
        assert dpr <= dpq + dqr + 1e-9


def test_route_locate_and_ride(chain):
    route = Route(chain, ["e1", "e2"])
    assert route.locate(chain.vertex("B"), 0) == 10
    assert route.locate(chain.vertex("B"), 10, strict=True) is None
    assert route.position(10) == chain.vertex("B")
    assert route.index(10) == 1
    assert route.ride(3, 3).pieces == (("e1", 3, 3),)


def test_edge_dataclass_guards():
    with pytest.raises(MapError):
        MapGraph({"A": (0, 0), "B": None}, [Edge("e", "A", "B", Segment.of(Line(1, 0)), 0.0)])
