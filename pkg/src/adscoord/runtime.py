"""The coordinating side: limit positions, the free-space policy, contract
monitors, and critical-path capacity analysis."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .dynamics import EPS_NUM, VehicleState, braking_distance
from .geometry import EPS_GEO
from .mapgraph import MapGraph, Position, Ride, crossing_witness
from .rules import LimitRule, Matcher, World, bound_of
from .verdict import OK, Verdict, fail, vacuous

L_MAX = 32


class ScenarioRejected(ValueError):
    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


@dataclass(frozen=True)
class Allocation:
    """Limit positions as odometer values on each vehicle's itinerary."""

    limits: Mapping[str, float]
    cycle: int = 0

    def free(self, v: VehicleState) -> float:
        return self.limits[v.id] - v.odo

    def limit_position(self, v: VehicleState) -> Position:
        return v.route.position(min(self.limits[v.id], v.route.total))


# --- non-crossing of free spaces -------------------------------------------

def ahead_ride(v: VehicleState, limit: float) -> Ride:
    return v.route.ride(v.odo, max(limit, v.odo))


def _keys(m: MapGraph, r: Ride) -> set:
    keys = set()
    for e, _, _ in r.pieces:
        keys.add(("e", e))
        edge = m.edges[e]
        keys.add(("v", edge.src))
        keys.add(("v", edge.dst))
        cell = m.junction_of.get(e)
        if cell is not None:
            keys.add(("j", cell))
    return keys


def non_crossing(m: MapGraph, rides: Mapping[str, Ride]) -> str | None:
    """Witness of the first crossing pair in id order, or ``None``."""
    by_key: dict = defaultdict(list)
    ids = sorted(rides)
    for vid in ids:
        for k in _keys(m, rides[vid]):
            by_key[k].append(vid)
    pairs = set()
    for members in by_key.values():
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                pairs.add((members[i], members[j]))
    for a, b in sorted(pairs):
        w = crossing_witness(m, rides[a], rides[b])
        if w is not None:
            return f"{a} and {b}: {w}"
    return None


# --- consistency ------------------------------------------------------------

@dataclass(frozen=True)
class ConsistencyVerdict:
    failures: tuple[tuple[str, str, str], ...] = ()  # vehicle, clause, witness

    @property
    def ok(self) -> bool:
        return not self.failures

    def verdict(self) -> Verdict:
        if self.ok:
            return OK
        vid, clause, witness = self.failures[0]
        return fail(clause, f"{vid}: {witness}")


def check_consistency(vehicles: Mapping[str, VehicleState], alloc: Allocation, m: MapGraph, stops: Mapping[str, Position]) -> ConsistencyVerdict:
    out = []
    for vid in sorted(vehicles):
        v = vehicles[vid]
        L = alloc.limits[vid]
        f = L - v.odo
        if f < -EPS_NUM:
            out.append((vid, "limit-ahead", f"limit {L:.6f} behind position {v.odo:.6f}"))
            continue
        for sid in sorted(stops):
            x = v.route.locate(stops[sid], v.odo, strict=True, horizon=max(f, 0.0))
            if x is not None and x < L - EPS_GEO:
                out.append((vid, "no-stop-between", f"stop {sid} at {x - v.odo:.6f} m before limit {f:.6f} m"))
                break
        k = v.route.index(v.odo)
        e1 = m.edges[v.route.edges[k]]
        cap = braking_distance(e1.speed, v.params)
        if f > cap + EPS_NUM:
            out.append((vid, "current-edge-speed", f"free space {f:.6f} > B(speed({e1.id}))={cap:.6f}"))
            continue
        if k + 1 < len(v.route.edges):
            e2 = m.edges[v.route.edges[k + 1]]
            cap2 = v.route.cum[k + 1] - v.odo + braking_distance(e2.speed, v.params)
            if f > cap2 + EPS_NUM:
                out.append((vid, "next-edge-speed", f"free space {f:.6f} > {cap2:.6f} allowed by {e2.id}"))
    return ConsistencyVerdict(tuple(out))


# --- allocation -------------------------------------------------------------

def initial_allocation(vehicles: Mapping[str, VehicleState], m: MapGraph, stops: Mapping[str, Position]) -> Allocation:
    limits = {vid: min(v.odo + v.braking(), v.route.total) for vid, v in vehicles.items()}
    alloc = Allocation(limits, 0)
    problems = []
    seen: dict[Position, str] = {}
    for vid in sorted(vehicles):
        p = vehicles[vid].position
        key = next((q for q in seen if q.same(p)), None)
        if key is not None:
            problems.append(f"vehicles {seen[key]} and {vid} start at the same position {p}")
        else:
            seen[p] = vid
    for vid, v in sorted(vehicles.items()):
        if v.odo + v.braking() > v.route.total + EPS_NUM:
            problems.append(f"vehicle {vid} cannot stop before the end of its itinerary")
    cons = check_consistency(vehicles, alloc, m, stops)
    problems += [f"vehicle {vid}: {clause} ({w})" for vid, clause, w in cons.failures]
    witness = non_crossing(m, {vid: ahead_ride(v, limits[vid]) for vid, v in vehicles.items()})
    if witness:
        problems.append(f"initial free spaces cross: {witness}")
    if problems:
        raise ScenarioRejected(problems)
    return alloc


@dataclass
class PolicyTrace:
    """Which bound produced each new limit, for diagnostics."""

    source: dict[str, str] = field(default_factory=dict)


def free_space_policy(
    world: World,
    alloc: Allocation,
    matcher: Matcher,
    trace: PolicyTrace | None = None,
) -> Allocation:
    """New limits: nearest matched rule bound, edge-end guard or itinerary end.

    ``world`` holds the vehicles after their move and ``alloc``'s limits.
    """
    new: dict[str, float] = {}
    rules: Sequence[LimitRule] = matcher.rules
    for vid, v in world.vehicles.items():
        route = v.route
        L = alloc.limits[vid]
        best, why = route.total, "end"
        if L < route.total - EPS_GEO:
            k = route.index(L)
            guard = route.cum[k + 1]
            if guard < best:
                best, why = guard, f"guard post({route.edges[k]})"
        for i, rule in enumerate(rules):
            for sigma in matcher.bindings(i, world, vid, best):
                b = bound_of(rule, sigma, world)
                if b < best:
                    best, why = b, rule.name
        new[vid] = best
        if trace is not None:
            trace.source[vid] = why
    return Allocation(new, alloc.cycle + 1)


# --- contract monitors ------------------------------------------------------

def limit_monotone(pre: Allocation, post: Allocation) -> Verdict:
    for vid in sorted(post.limits):
        if vid in pre.limits and post.limits[vid] < pre.limits[vid] - EPS_NUM:
            return fail("monotone", f"{vid}: limit moved back {pre.limits[vid] - post.limits[vid]:.6g} m")
    return OK


def check_runtime_contract(
    vehicles: Mapping[str, VehicleState],
    prev_odo: Mapping[str, float],
    pre: Allocation,
    post: Allocation,
    m: MapGraph,
) -> Verdict:
    """Runtime contract over one cycle.

    ``vehicles`` are the states after the move; ``prev_odo`` their odometers
    before it, so ``f - delta = pre.limit - odo``.
    """
    for vid in sorted(vehicles):
        v = vehicles[vid]
        f_old = pre.limits[vid] - prev_odo[vid]
        if v.displacement < -EPS_NUM or v.displacement > f_old + EPS_NUM:
            return vacuous("assumption", f"{vid}: delta={v.displacement} outside [0, {f_old}]")
    before = {vid: ahead_ride(v, pre.limits[vid]) for vid, v in vehicles.items()}
    if non_crossing(m, before):
        return vacuous("assumption", "remaining free spaces already cross")
    for vid in sorted(vehicles):
        v = vehicles[vid]
        if post.limits[vid] - v.odo < pre.limits[vid] - v.odo - EPS_NUM:
            return fail("free-space-shrinks", f"{vid}: f'={post.limits[vid] - v.odo:.6f} < f-delta={pre.limits[vid] - v.odo:.6f}")
    witness = non_crossing(m, {vid: ahead_ride(v, post.limits[vid]) for vid, v in vehicles.items()})
    if witness:
        return fail("non-crossing", witness)
    return OK


def check_invariant(vehicles: Mapping[str, VehicleState], alloc: Allocation, m: MapGraph) -> tuple[Verdict, Verdict]:
    """Speed compliance with free space, and non-crossing free spaces."""
    speed = OK
    for vid in sorted(vehicles):
        v = vehicles[vid]
        f = alloc.limits[vid] - v.odo
        if v.speed < 0 or v.braking() > f + EPS_NUM:
            speed = fail("speed-vs-free-space", f"{vid}: B(v)={v.braking():.6f} > f={f:.6f}")
            break
    witness = non_crossing(m, {vid: ahead_ride(v, alloc.limits[vid]) for vid, v in vehicles.items()})
    return speed, (fail("non-crossing", witness) if witness else OK)


# --- critical paths and capacity -------------------------------------------

@dataclass(frozen=True)
class CriticalPath:
    edges: tuple[str, ...]
    kind: str  # "circuit" or "return"
    junctions: int

    def text(self) -> str:
        return " ".join(self.edges)


class CapacityPreconditionError(ValueError):
    pass


def _junction_runs(m: MapGraph, edges: Sequence[str], cyclic: bool) -> list[int]:
    """Junction cell of each maximal run of consecutive edges inside one cell."""
    cells = [m.junction_of.get(e) for e in edges]
    runs = []
    for i, c in enumerate(cells):
        if c is None:
            continue
        prev = cells[i - 1] if (i > 0 or cyclic) else None
        if prev != c:
            runs.append(c)
    if cyclic and cells and all(c is not None and c == cells[0] for c in cells):
        runs = [cells[0]]
    return runs


def critical_paths(m: MapGraph, l_max: int = L_MAX) -> tuple[list[CriticalPath], bool]:
    """Elementary circuits visiting each junction at most once, and paths
    that leave a junction and come back to it. Returns ``(paths, truncated)``."""
    out: list[CriticalPath] = []
    truncated = False
    ids = sorted(m.edges)
    rank = {e: i for i, e in enumerate(ids)}

    # circuits, each reported once starting from its smallest edge id
    for e0 in ids:
        start = m.edges[e0].src
        stack = [(e0, [e0], {start, m.edges[e0].dst})]
        while stack:
            e, path, seen = stack.pop()
            v = m.edges[e].dst
            if v == start:
                runs = _junction_runs(m, path, cyclic=True)
                if len(runs) == len(set(runs)):
                    out.append(CriticalPath(tuple(path), "circuit", len(runs)))
                continue
            if len(path) >= l_max:
                truncated = True
                continue
            for n in sorted(m.out_edges[v], reverse=True):
                if rank[n] <= rank[e0]:
                    continue
                w = m.edges[n].dst
                if w != start and w in seen:
                    continue
                stack.append((n, path + [n], seen | {w}))

    # paths leaving a junction and entering it again through another of its edges
    for e0 in ids:
        cell = m.junction_of.get(e0)
        if cell is None:
            continue
        stack = [(e0, [e0], {m.edges[e0].src, m.edges[e0].dst})]
        while stack:
            e, path, seen = stack.pop()
            if len(path) > 1 and m.junction_of.get(e) == cell and m.junction_of.get(path[-2]) != cell:
                runs = _junction_runs(m, path, cyclic=False)
                inner = runs[1:-1]
                if cell not in inner and len(inner) == len(set(inner)):
                    out.append(CriticalPath(tuple(path), "return", len(set(runs))))
                continue
            if len(path) >= l_max:
                truncated = True
                continue
            v = m.edges[e].dst
            for n in sorted(m.out_edges[v], reverse=True):
                w = m.edges[n].dst
                if n in path:
                    continue
                if w in seen and not (m.junction_of.get(n) == cell and m.junction_of.get(e) != cell):
                    continue
                stack.append((n, path + [n], seen | {w}))
    uniq = {(p.kind, p.edges): p for p in out}
    return [uniq[k] for k in sorted(uniq)], truncated


def capacity(path: CriticalPath, f_min: float, m: MapGraph, b_max: float | None = None) -> int:
    if f_min <= 0:
        raise ValueError("f_min must be positive")
    bad = []
    total = 0
    for e in path.edges:
        if e in m.junction_of:
            continue
        edge = m.edges[e]
        if edge.length <= f_min:
            bad.append(f"{e}: length {edge.length:.4f} <= f_min {f_min:.4f}")
        if b_max is not None and edge.speed <= math.sqrt(2 * b_max * f_min):
            bad.append(f"{e}: speed {edge.speed:.4f} cannot reach B^-1(f_min)={math.sqrt(2 * b_max * f_min):.4f}")
        total += math.floor(edge.length / f_min)
    if bad:
        raise CapacityPreconditionError("; ".join(bad))
    return path.junctions + total - 1


def check_load(vehicles: Iterable[VehicleState], paths: Sequence[CriticalPath], capacities: Sequence[int]) -> Verdict:
    current = [v.edge for v in vehicles]
    for p, kappa in zip(paths, capacities):
        members = set(p.edges)
        load = sum(1 for e in current if e in members)
        if load >= kappa:
            return fail("load", f"{load} vehicles on [{p.text()}] with capacity {kappa}")
    return OK
