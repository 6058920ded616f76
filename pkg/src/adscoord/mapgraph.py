"""Metric-graph maps: edges labelled by segments, positions, rides, distance.

Positions are normalized on construction: offset 0 and offset ``len(e)``
collapse to the edge's source and target vertices.
"""

from __future__ import annotations

import bisect
import hashlib
import heapq
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from . import geometry
from .geometry import EPS_GEO, Segment

INF = math.inf


class MapError(ValueError):
    """Malformed map text or structurally invalid map."""


class ConfigurationError(MapError):
    pass


@dataclass(frozen=True)
class Edge:
    id: str
    src: str
    dst: str
    segment: Segment
    speed: float

    @property
    def length(self) -> float:
        return self.segment.length


@dataclass(frozen=True, order=True)
class Position:
    """Either a vertex (``edge is None``) or an interior point ``(edge, offset)``."""

    vertex: str | None = None
    edge: str | None = None
    offset: float = 0.0

    @property
    def is_vertex(self) -> bool:
        return self.edge is None

    def __str__(self) -> str:
        return self.vertex if self.edge is None else f"{self.edge}:{self.offset:.6g}"

    def same(self, other: Position, eps: float = EPS_GEO) -> bool:
        if self.edge is None or other.edge is None:
            return self.edge == other.edge and self.vertex == other.vertex
        return self.edge == other.edge and abs(self.offset - other.offset) <= eps


@dataclass(frozen=True)
class Ride:
    """Ordered per-edge intervals ``(edge, lo, hi)``; a point ride has one piece with lo == hi."""

    pieces: tuple[tuple[str, float, float], ...]
    start: Position
    end: Position

    @property
    def length(self) -> float:
        return sum(hi - lo for _, lo, hi in self.pieces)

    def interior_vertices(self, m: MapGraph) -> list[str]:
        return [m.edges[e].dst for e, _, _ in self.pieces[:-1]]


@dataclass(frozen=True)
class ConsistencyReport:
    mismatched: list[tuple[str, float]] = field(default_factory=list)  # vertex, gap in meters
    coincident: list[tuple[str, str]] = field(default_factory=list)
    self_crossing: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.mismatched or self.coincident or self.self_crossing)

    def lines(self) -> list[str]:
        out = [f"vertex {v}: coordinates disagree by {gap:.6g} m" for v, gap in self.mismatched]
        out += [f"vertices {a} and {b} coincide" for a, b in self.coincident]
        out += [f"edge {e} crosses itself" for e in self.self_crossing]
        return out


class MapGraph:
    def __init__(
        self,
        vertices: dict[str, tuple[float, float] | None],
        edges: Sequence[Edge],
        junctions: Sequence[Iterable[str]] | None = None,
        entry_order: Iterable[tuple[str, str]] = (),
        priority: dict[str, Sequence[str]] | None = None,
        text: str = "",
    ):
        self.declared = dict(vertices)
        self.vertices = sorted(vertices)
        self.edges: dict[str, Edge] = {}
        for e in edges:
            if e.id in self.edges:
                raise MapError(f"duplicate edge {e.id}")
            for v in (e.src, e.dst):
                if v not in vertices:
                    raise MapError(f"edge {e.id} references unknown vertex {v}")
            if not e.speed > 0:
                raise MapError(f"edge {e.id} needs a positive speed limit")
            self.edges[e.id] = e
        self.out_edges: dict[str, list[str]] = defaultdict(list)
        self.in_edges: dict[str, list[str]] = defaultdict(list)
        for e in edges:
            self.out_edges[e.src].append(e.id)
            self.in_edges[e.dst].append(e.id)
        self.text = text
        self.digest = hashlib.sha256(text.encode()).hexdigest()[:16] if text else ""
        self.declared_junctions = [sorted(set(j)) for j in junctions] if junctions else []
        self.priority = {v: list(es) for v, es in (priority or {}).items()}
        self.entry_pairs = set(entry_order)
        self._entry_closure = _transitive_closure(self.entry_pairs)
        self.coords: dict[str, tuple[float, float]] = {}
        self._check_structure()
        self._embed()
        self.junctions: list[tuple[str, ...]] = []
        self.junction_of: dict[str, int] = {}
        self.set_junctions(self.declared_junctions or infer_junctions(self))

    # --- structure --------------------------------------------------------

    def _check_structure(self) -> None:
        if not self.vertices:
            raise MapError("map has no vertices")
        adj: dict[str, set[str]] = defaultdict(set)
        for e in self.edges.values():
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(self.vertices):
            missing = sorted(set(self.vertices) - seen)
            raise MapError(f"map is not weakly connected; unreachable: {', '.join(missing)}")
        for v, order in self.priority.items():
            if set(order) != set(self.in_edges[v]) or len(order) != len(set(order)):
                raise MapError(f"priority at {v} must order exactly its in-edges {sorted(self.in_edges[v])}")

    def set_junctions(self, cells: Iterable[Iterable[str]]) -> None:
        self.junctions = []
        self.junction_of = {}
        for cell in cells:
            cell = tuple(sorted(set(cell)))
            if len(cell) < 2:
                raise MapError(f"junction {cell} must contain at least two edges")
            for e in cell:
                if e not in self.edges:
                    raise MapError(f"junction references unknown edge {e}")
                if e in self.junction_of:
                    raise MapError(f"edge {e} listed in two junctions")
                self.junction_of[e] = len(self.junctions)
            self.junctions.append(cell)
        for v in self.vertices:
            free = [e for e in self.in_edges[v] if e not in self.junction_of]
            if len(free) >= 2 and v not in self.priority:
                raise MapError(f"merger vertex {v} needs a priority declaration")

    def mergers(self) -> list[str]:
        return [v for v in self.vertices if len([e for e in self.in_edges[v] if e not in self.junction_of]) >= 2]

    def entry_before(self, v1: str, v2: str) -> bool:
        return (v1, v2) in self._entry_closure

    def lower_priority(self, u: str, e1: str, e2: str) -> bool:
        """True when in-edge ``e1`` of ``u`` yields to ``e2``."""
        order = self.priority.get(u)
        if not order or e1 not in order or e2 not in order:
            return False
        return order.index(e1) > order.index(e2)

    def same_junction(self, e1: str, e2: str) -> bool:
        j1 = self.junction_of.get(e1)
        return j1 is not None and j1 == self.junction_of.get(e2)

    # --- embedding --------------------------------------------------------

    def _embed(self) -> None:
        seeds = [v for v in self.vertices if self.declared.get(v) is not None]
        if not seeds:
            raise ConfigurationError("no vertex has declared coordinates; cannot embed the map")
        coords: dict[str, tuple[float, float]] = {v: self.declared[v] for v in seeds}
        queue = list(seeds)
        while queue:
            v = queue.pop(0)
            for eid in sorted(self.out_edges[v]):
                e = self.edges[eid]
                if e.dst not in coords:
                    coords[e.dst] = geometry.eval(e.segment, e.length, coords[v])[0]
                    queue.append(e.dst)
            for eid in sorted(self.in_edges[v]):
                e = self.edges[eid]
                if e.src not in coords:
                    end = geometry.eval(e.segment, e.length)[0]
                    coords[e.src] = (coords[v][0] - end[0], coords[v][1] - end[1])
                    queue.append(e.src)
        self.coords = coords

    def point(self, p: Position) -> tuple[float, float]:
        if p.edge is None:
            return self.coords[p.vertex]
        e = self.edges[p.edge]
        return geometry.eval(e.segment, p.offset, self.coords[e.src])[0]

    def edge_point(self, eid: str, offset: float) -> tuple[tuple[float, float], float]:
        e = self.edges[eid]
        return geometry.eval(e.segment, offset, self.coords[e.src])

    # --- positions --------------------------------------------------------

    def position(self, edge: str, offset: float) -> Position:
        e = self.edges[edge]
        if offset < -EPS_GEO or offset > e.length + EPS_GEO:
            raise ValueError(f"offset {offset} outside edge {edge} of length {e.length}")
        if offset <= 0:
            return Position(vertex=e.src)
        if offset >= e.length:
            return Position(vertex=e.dst)
        return Position(edge=edge, offset=offset)

    def vertex(self, v: str) -> Position:
        if v not in self.declared:
            raise KeyError(v)
        return Position(vertex=v)

    # --- distance ---------------------------------------------------------

    def distance(self, p: Position, q: Position) -> float:
        """Shortest directed arclength from ``p`` to ``q``; ``inf`` if unreachable."""
        if p.same(q):
            return 0.0
        if p.edge is not None and q.edge == p.edge and q.offset > p.offset:
            return q.offset - p.offset
        # Dijkstra from the vertex reached first out of p
        if p.edge is None:
            start, base = p.vertex, 0.0
        else:
            start, base = self.edges[p.edge].dst, self.edges[p.edge].length - p.offset
        targets: dict[str, float]
        if q.edge is None:
            targets = {q.vertex: 0.0}
        else:
            targets = {self.edges[q.edge].src: q.offset}
        dist = {start: base}
        heap = [(base, start)]
        best = INF
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist.get(v, INF) or d >= best:
                continue
            if v in targets:
                best = min(best, d + targets[v])
            for eid in self.out_edges[v]:
                e = self.edges[eid]
                nd = d + e.length
                if nd < dist.get(e.dst, INF):
                    dist[e.dst] = nd
                    heapq.heappush(heap, (nd, e.dst))
        return best

    def non_crossing(self, rides: Sequence[Ride]) -> tuple[bool, str | None]:
        for i in range(len(rides)):
            for j in range(i + 1, len(rides)):
                w = crossing_witness(self, rides[i], rides[j])
                if w is not None:
                    return False, f"rides {i} and {j}: {w}"
        return True, None


def _transitive_closure(pairs: set[tuple[str, str]]) -> set[tuple[str, str]]:
    closure = set(pairs)
    changed = True
    while changed:
        changed = False
        for a, b in list(closure):
            for c, d in list(closure):
                if b == c and (a, d) not in closure:
                    closure.add((a, d))
                    changed = True
    return closure


# --- map validation ------------------------------------------------------

def validate_2d(m: MapGraph) -> ConsistencyReport:
    """Check the embedding: path-independent vertex coordinates, distinct vertices, no self-crossing edges."""
    mismatched: dict[str, float] = {}
    for e in sorted(m.edges.values(), key=lambda e: e.id):
        end = geometry.eval(e.segment, e.length, m.coords[e.src])[0]
        gap = math.dist(end, m.coords[e.dst])
        if gap > EPS_GEO:
            mismatched[e.dst] = max(mismatched.get(e.dst, 0.0), gap)
    for v, c in m.declared.items():
        if c is not None and math.dist(c, m.coords[v]) > EPS_GEO:
            mismatched[v] = max(mismatched.get(v, 0.0), math.dist(c, m.coords[v]))
    coincident = []
    vs = m.vertices
    for i, a in enumerate(vs):
        for b in vs[i + 1:]:
            if math.dist(m.coords[a], m.coords[b]) <= EPS_GEO:
                coincident.append((a, b))
    selfx = [e.id for e in sorted(m.edges.values(), key=lambda e: e.id) if geometry.self_crossings(e.segment, m.coords[e.src])]
    return ConsistencyReport(sorted(mismatched.items()), coincident, selfx)


def infer_junctions(m: MapGraph) -> list[tuple[str, ...]]:
    """Classes of edges related by crossings away from their endpoints."""
    ids = sorted(m.edges)
    parent = {e: e for e in ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    related = set()
    for i, a in enumerate(ids):
        ea = m.edges[a]
        for b in ids[i + 1:]:
            eb = m.edges[b]
            for d1, d2 in geometry.crossings(ea.segment, eb.segment, m.coords[ea.src], 0.0, m.coords[eb.src], 0.0):
                at_end1 = d1 <= EPS_GEO or d1 >= ea.length - EPS_GEO
                at_end2 = d2 <= EPS_GEO or d2 >= eb.length - EPS_GEO
                if not (at_end1 and at_end2):
                    related.add(a)
                    related.add(b)
                    parent[find(a)] = find(b)
                    break
    cells: dict[str, list[str]] = defaultdict(list)
    for e in ids:
        if e in related:
            cells[find(e)].append(e)
    return sorted(tuple(sorted(c)) for c in cells.values() if len(c) >= 2)


def check_speed_limit_compatibility(m: MapGraph, braking: dict[str, float]) -> list[str]:
    """Violations of the braking/speed-limit compatibility assumptions.

    ``braking`` maps vehicle id to its ``b_max``.
    """
    out = []
    into_conflict = set()
    mergers = set(m.mergers())
    for e in m.edges.values():
        if e.id in m.junction_of:
            continue
        nxt = m.out_edges[e.dst]
        if e.dst in mergers or any(n in m.junction_of for n in nxt):
            into_conflict.add(e.id)
    for vid, b in sorted(braking.items()):
        def B(v: float, b: float = b) -> float:
            return v * v / (2 * b)

        for eid in sorted(into_conflict):
            e = m.edges[eid]
            if B(e.speed) > e.length + 1e-9:
                out.append(f"vehicle {vid}: edge {eid} leads to a junction or merger but B(speed)={B(e.speed):.4f} > length {e.length:.4f}")
        for e1 in sorted(m.edges.values(), key=lambda e: e.id):
            for e2id in sorted(m.out_edges[e1.dst]):
                e2 = m.edges[e2id]
                if B(e1.speed) > e1.length + B(e2.speed) + 1e-9:
                    out.append(
                        f"vehicle {vid}: consecutive edges {e1.id},{e2.id}: "
                        f"B(speed {e1.id})={B(e1.speed):.4f} > {e1.length:.4f} + {B(e2.speed):.4f}"
                    )
    return out


def crossing_witness(m: MapGraph, r1: Ride, r2: Ride) -> str | None:
    """Reason why two rides cross, or ``None`` if they are non-crossing.

    Rides may touch at positions that are an endpoint of at least one of them.
    """
    # positive-length overlap on a shared edge
    by_edge: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for e, lo, hi in r2.pieces:
        by_edge[e].append((lo, hi))
    for e, lo, hi in r1.pieces:
        for lo2, hi2 in by_edge.get(e, ()):
            if min(hi, hi2) - max(lo, lo2) > EPS_GEO:
                return f"overlap on edge {e}"
    # a vehicle standing strictly inside the other ride
    for ra, rb in ((r1, r2), (r2, r1)):
        if _strictly_inside(m, ra.start, rb) and not ra.start.same(rb.start):
            return f"start {ra.start} lies inside the other ride"
    iv1 = set(r1.interior_vertices(m))
    iv2 = set(r2.interior_vertices(m))
    both = iv1 & iv2
    if both:
        return f"both rides pass through vertex {min(both)}"
    j1 = _junction_presence(m, r1)
    j2 = _junction_presence(m, r2)
    common = j1 & j2
    if common:
        return f"both rides occupy junction {m.junctions[min(common)]}"
    return None


def _strictly_inside(m: MapGraph, p: Position, r: Ride) -> bool:
    if p.edge is None:
        return p.vertex in r.interior_vertices(m)
    for e, lo, hi in r.pieces:
        if e == p.edge and lo + EPS_GEO < p.offset < hi - EPS_GEO:
            return True
    return False


def _junction_presence(m: MapGraph, r: Ride) -> set[int]:
    out = set()
    for e, lo, hi in r.pieces:
        j = m.junction_of.get(e)
        if j is None:
            continue
        length = m.edges[e].length
        if hi - lo > EPS_GEO or EPS_GEO < lo < length - EPS_GEO:
            out.add(j)
    return out


# --- map text format -----------------------------------------------------

def parse_map(text: str) -> MapGraph:
    vertices: dict[str, tuple[float, float] | None] = {}
    edges: list[Edge] = []
    junctions: list[list[str]] = []
    entry: list[tuple[str, str]] = []
    prio: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        kw = words[0]
        try:
            if kw == "vertex":
                if len(words) == 2:
                    vertices[words[1]] = None
                elif len(words) == 4:
                    vertices[words[1]] = (float(words[2]), float(words[3]))
                else:
                    raise MapError("expected: vertex <id> [<x> <y>]")
            elif kw == "edge":
                if len(words) != 6:
                    raise MapError("expected: edge <id> <from> <to> speed=<v> seg=<prims>")
                kv = dict(w.split("=", 1) for w in words[4:])
                edges.append(Edge(words[1], words[2], words[3], geometry.parse_segment(kv["seg"]), float(kv["speed"])))
            elif kw == "junction":
                junctions.append(words[1:])
            elif kw == "entry_order":
                if len(words) != 4 or words[2] != "<":
                    raise MapError("expected: entry_order <v1> < <v2>")
                entry.append((words[1], words[3]))
            elif kw == "priority":
                head, _, rest = line[len("priority"):].partition(":")
                order = [w.strip() for w in rest.split(">")]
                if not head.strip() or any(not w for w in order):
                    raise MapError("expected: priority <vertex>: <edge> > <edge> ...")
                prio[head.strip()] = order
            else:
                raise MapError(f"unknown declaration {kw!r}")
        except (KeyError, ValueError) as exc:
            raise MapError(f"line {lineno}: {exc}") from None
    for a, b in entry:
        for v in (a, b):
            if v not in vertices:
                raise MapError(f"entry_order references unknown vertex {v}")
    for v in prio:
        if v not in vertices:
            raise MapError(f"priority references unknown vertex {v}")
    return MapGraph(vertices, edges, junctions or None, entry, prio, text=text)


# --- rides along itineraries ---------------------------------------------

class Route:
    """An itinerary as an edge path with cumulative arclengths.

    Vehicles carry an odometer ``odo`` measured from the route start; all
    positions ahead of a vehicle are compared as odometer values.
    """

    __slots__ = ("_edge_idx", "_vertex_marks", "cum", "edges", "m", "total")

    def __init__(self, m: MapGraph, edges: Sequence[str]):
        if not edges:
            raise ValueError("empty itinerary")
        for a, b in zip(edges, edges[1:]):
            if m.edges[a].dst != m.edges[b].src:
                raise ValueError(f"itinerary edges {a} and {b} do not chain")
        self.m = m
        self.edges = tuple(edges)
        cum = [0.0]
        for e in self.edges:
            cum.append(cum[-1] + m.edges[e].length)
        self.cum = tuple(cum)
        self.total = cum[-1]
        idx: dict[str, list[int]] = defaultdict(list)
        marks: dict[str, list[float]] = defaultdict(list)
        for k, e in enumerate(self.edges):
            idx[e].append(k)
            marks[m.edges[e].src].append(cum[k])
        marks[m.edges[self.edges[-1]].dst].append(self.total)
        self._edge_idx = dict(idx)
        self._vertex_marks = {v: sorted(set(xs)) for v, xs in marks.items()}

    def index(self, odo: float) -> int:
        """Index of the edge holding ``odo``; a vertex belongs to the edge leaving it."""
        k = bisect.bisect_right(self.cum, odo) - 1
        return min(max(k, 0), len(self.edges) - 1)

    def position(self, odo: float) -> Position:
        k = self.index(odo)
        return self.m.position(self.edges[k], min(max(odo - self.cum[k], 0.0), self.m.edges[self.edges[k]].length))

    def locate(self, p: Position, after: float, strict: bool = False, horizon: float = INF) -> float | None:
        """First odometer value ``>= after`` (``>`` if strict) where the route passes ``p``."""
        limit = min(after + horizon, self.total) + EPS_GEO
        if p.edge is None:
            marks = self._vertex_marks.get(p.vertex)
            if not marks:
                return None
            i = bisect.bisect_left(marks, after - EPS_GEO)
            while i < len(marks):
                x = marks[i]
                if x > limit:
                    return None
                if x > after + EPS_GEO or (not strict and x >= after - EPS_GEO):
                    return x
                i += 1
            return None
        for k in self._edge_idx.get(p.edge, ()):
            x = self.cum[k] + p.offset
            if x > limit:
                return None
            if x > after + EPS_GEO or (not strict and x >= after - EPS_GEO):
                return x
        return None

    def occurrences(self, edge: str) -> list[int]:
        return self._edge_idx.get(edge, [])

    def ride(self, a: float, b: float) -> Ride:
        """The ride along the route between odometer values ``a <= b``."""
        if b < a - EPS_GEO:
            raise ValueError("ride end before start")
        b = max(a, min(b, self.total))
        k = self.index(a)
        pieces = []
        if b - a <= EPS_GEO:
            e = self.edges[k]
            off = a - self.cum[k]
            pieces.append((e, off, off))
        else:
            while k < len(self.edges) and self.cum[k] < b - EPS_GEO:
                lo = max(a, self.cum[k]) - self.cum[k]
                hi = min(b, self.cum[k + 1]) - self.cum[k]
                if hi - lo > EPS_GEO or not pieces:
                    pieces.append((self.edges[k], lo, hi))
                k += 1
        return Ride(tuple(pieces), self.position(a), self.position(b))


def advance(m: MapGraph, p: Position, itinerary: Sequence[str], delta: float) -> Position:
    """Position reached from ``p`` after ``delta`` meters along ``itinerary``."""
    if delta < 0:
        raise ValueError("negative displacement")
    route = Route(m, itinerary)
    start = route.locate(p, 0.0)
    if start is None or route.index(start) != 0 and start > route.cum[1] + EPS_GEO:
        raise ValueError(f"{p} is not on the first edge of the itinerary")
    if start + delta > route.total + EPS_GEO:
        raise ValueError(f"displacement {delta} exceeds the itinerary")
    return route.position(start + delta)


def ahead(m: MapGraph, p: Position, itinerary: Sequence[str], f: float) -> Ride:
    route = Route(m, itinerary)
    start = route.locate(p, 0.0)
    if start is None:
        raise ValueError(f"{p} is not on the itinerary")
    return route.ride(start, start + f)


def non_crossing(m: MapGraph, rides: Sequence[Ride]) -> tuple[bool, str | None]:
    return m.non_crossing(rides)


def distance(m: MapGraph, p: Position, q: Position) -> float:
    return m.distance(p, q)
