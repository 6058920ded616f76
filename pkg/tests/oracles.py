"""Independent reference implementations used by the tests."""

import math
import random

from adscoord.geometry import Line, Segment
from adscoord.mapgraph import Edge, MapError, MapGraph, Position


def random_map(rng: random.Random, max_edges: int = 6) -> MapGraph:
    while True:
        nv = rng.randint(2, 4)
        vs = [f"v{i}" for i in range(nv)]
        ne = rng.randint(1, max_edges)
        edges = []
        for k in range(ne):
            a, b = rng.choice(vs), rng.choice(vs)
            if a == b:
                continue
            edges.append(Edge(f"e{k}", a, b, Segment.of(Line(rng.randint(1, 20) * 0.5, rng.uniform(-3, 3))), 10.0))
        if not edges:
            continue
        ins: dict[str, list[str]] = {}
        for e in edges:
            ins.setdefault(e.dst, []).append(e.id)
        prio = {v: es for v, es in ins.items() if len(es) >= 2}
        coords = {v: None for v in vs}
        coords["v0"] = (0.0, 0.0)
        try:
            m = MapGraph(coords, edges, junctions=[], priority=prio)
        except MapError:
            continue
        return m


def random_position(rng: random.Random, m: MapGraph) -> Position:
    if rng.random() < 0.4:
        return m.vertex(rng.choice(m.vertices))
    e = m.edges[rng.choice(sorted(m.edges))]
    return m.position(e.id, rng.randint(0, int(e.length * 2)) * 0.5)


def brute_distance(m: MapGraph, p: Position, q: Position) -> float:
    """Minimum length over all rides from p to q that use each full edge at most once."""
    if p.same(q):
        return 0.0
    best = math.inf
    if p.edge is not None and p.edge == q.edge and q.offset > p.offset:
        best = q.offset - p.offset
    if p.edge is None:
        start, base = p.vertex, 0.0
    else:
        start, base = m.edges[p.edge].dst, m.edges[p.edge].length - p.offset

    def arrive(v: str, d: float) -> float:
        if q.edge is None:
            return d if v == q.vertex else math.inf
        return d + q.offset if m.edges[q.edge].src == v else math.inf

    def walk(v: str, d: float, used: frozenset) -> None:
        nonlocal best
        best = min(best, arrive(v, d))
        for eid, e in m.edges.items():
            if e.src == v and eid not in used:
                walk(e.dst, d + e.length, used | {eid})

    walk(start, base, frozenset())
    return best


def min_blockers(length: float, fmin: float, step: float = 0.01) -> int:
    """Fewest points on [0, length] so every gap, ends included, is below fmin.

    Computed by scanning placements on a grid rather than by formula.
    """
    n = round(length / step)
    reach = int(math.ceil(fmin / step)) - 1  # largest gap in grid steps that is < fmin
    # dp over grid indices: minimal count of points with last point at i
    INF = 10**9
    best = [INF] * (n + 1)
    for i in range(n + 1):
        if i <= reach:
            best[i] = 1
        for j in range(max(0, i - reach), i):
            best[i] = min(best[i], best[j] + 1)
    return min(best[i] for i in range(n + 1) if n - i <= reach)


def min_blockers_cyclic(length: float, fmin: float, step: float = 0.01) -> int:
    """Fewest points on a closed loop of ``length`` so every gap between neighbours is below fmin.

    One point is pinned at 0 (rotation does not matter); the rest are placed on the grid.
    """
    n = round(length / step)
    reach = int(math.ceil(fmin / step)) - 1
    INF = 10**9
    best = [INF] * (n + 1)
    best[0] = 1
    for i in range(1, n + 1):
        for j in range(max(0, i - reach), i):
            best[i] = min(best[i], best[j] + 1)
    # the wrap-around gap from the last point back to 0
    return min(best[i] for i in range(n) if n - i <= reach)
