"""Evaluation of rule atoms over a system state and binding enumeration.

Objects ahead of a vehicle are located on its itinerary as odometer
values, so every comparison "along the itinerary" is a float comparison.
"""

from __future__ import annotations

import bisect
import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from ..dynamics import EPS_NUM, VehicleState, braking_distance
from ..geometry import EPS_GEO
from ..mapgraph import MapGraph, Position
from .ast import (
    At,
    Atom,
    BrakeCmp,
    BrakeOf,
    Color,
    EdgeMeets,
    EntryBefore,
    Expr,
    Junction,
    LimitCmp,
    LimitRule,
    Meets,
    Num,
    Pre,
    Prio,
    Rule,
    SpeedCmp,
    SpeedLimit,
    Term,
    Var,
    WaitCmp,
    atom_vars,
)
from .syntax import RuleError, print_atom

R_MATCH = 250.0
INF = math.inf
OBJECT_SORTS = ("vehicle", "stop_sign", "traffic_light")

Binding = dict[str, str]


class RuleApplicationError(RuleError):
    pass


def compare(a: float, op: str, b: float, eps: float = EPS_NUM) -> bool:
    if op == "<=":
        return a <= b + eps
    if op == "<":
        return a < b - eps
    if op == "=":
        return a == b or abs(a - b) <= eps
    if op == ">=":
        return a >= b - eps
    if op == ">":
        return a > b + eps
    raise ValueError(op)


class World:
    """Read-only snapshot: vehicles, fixed objects, light colors and limits."""

    def __init__(
        self,
        m: MapGraph,
        vehicles: Mapping[str, VehicleState],
        stops: Mapping[str, Position],
        lights: Mapping[str, Position],
        colors: Mapping[str, str],
        limits: Mapping[str, float] | None = None,
    ):
        self.m = m
        self.vehicles = dict(sorted(vehicles.items()))
        self.stops = stops
        self.lights = lights
        self.colors = colors
        self.limits = limits or {}
        self.pos: dict[str, Position] = {}
        self.idx: dict[str, int] = {}
        self.cur: dict[str, str] = {}
        self.domains: dict[str, list[str]] = {
            "vehicle": list(self.vehicles),
            "stop_sign": sorted(stops),
            "traffic_light": sorted(lights),
            "vertex": m.vertices,
            "edge": sorted(m.edges),
        }
        self.sort_of: dict[str, str] = {}
        self._on_edge: dict[str, list[tuple[float, str]]] = defaultdict(list)
        self._on_vertex: dict[str, list[str]] = defaultdict(list)
        self._in_cell: dict[int, list[str]] = defaultdict(list)
        self._heading_to: dict[str, list[str]] = defaultdict(list)
        for sort, table in (("stop_sign", stops), ("traffic_light", lights)):
            for oid, p in table.items():
                self._index(oid, sort, p)
        for vid, v in self.vehicles.items():
            k = v.route.index(v.odo)
            self.idx[vid] = k
            self.cur[vid] = v.route.edges[k]
            self._heading_to[m.edges[self.cur[vid]].dst].append(vid)
            p = v.route.position(v.odo)
            self._index(vid, "vehicle", p)
            cell = m.junction_of.get(self.cur[vid])
            if cell is not None:
                self._in_cell[cell].append(vid)
        for lst in self._on_edge.values():
            lst.sort()

    def _index(self, oid: str, sort: str, p: Position) -> None:
        self.sort_of[oid] = sort
        self.pos[oid] = p
        if p.edge is None:
            self._on_vertex[p.vertex].append(oid)
        else:
            self._on_edge[p.edge].append((p.offset, oid))

    # --- locating things on an itinerary --------------------------------

    def queued_ahead(self, other: str, c: str) -> bool:
        """Co-located vehicles queue by waiting time, then by id."""
        a, b = self.vehicles[other], self.vehicles[c]
        return (a.wait_cycles, b.id) > (b.wait_cycles, a.id)

    def locate(self, c: str, x: str, strict: bool = False, horizon: float = INF) -> float | None:
        """Odometer on ``c``'s itinerary where object or vertex ``x`` is next met."""
        v = self.vehicles[c]
        route, odo = v.route, v.odo
        sort = self.sort_of.get(x)
        if sort is None:
            if x in self.m.edges:
                return self.locate_pre(c, x, strict, horizon)
            if x not in self.m.declared:
                return None
            return route.locate(Position(vertex=x), odo, strict, horizon)
        p = self.pos[x]
        if sort == "vehicle":
            if x == c:
                return None if strict else odo
            if p.same(self.pos[c]):
                if self.queued_ahead(x, c):
                    return odo
                return route.locate(p, odo, True, horizon)
        return route.locate(p, odo, strict, horizon)

    def locate_pre(self, c: str, e: str, strict: bool = False, horizon: float = INF) -> float | None:
        v = self.vehicles[c]
        route, odo = v.route, v.odo
        limit = odo + horizon + EPS_GEO
        for k in route.occurrences(e):
            x = route.cum[k]
            if x > limit:
                return None
            if x > odo + EPS_GEO or (not strict and x >= odo - EPS_GEO):
                return x
        return None

    def locate_post(self, c: str, e: str) -> float | None:
        v = self.vehicles[c]
        for k in v.route.occurrences(e):
            x = v.route.cum[k + 1]
            if x >= v.odo - EPS_GEO:
                return x
        return None

    def locate_term(self, c: str, t: Term, sigma: Binding) -> float | None:
        if isinstance(t, Var):
            return self.locate(c, sigma[t.name])
        if isinstance(t, Pre):
            return self.locate_pre(c, sigma[t.edge])
        return self.locate_post(c, sigma[t.edge])

    def in_edge(self, c: str, u: str) -> str | None:
        v = self.vehicles[c]
        x = v.route.locate(Position(vertex=u), v.odo)
        if x is None:
            return None
        k = bisect.bisect_left(v.route.cum, x - EPS_GEO)
        return v.route.edges[k - 1] if k >= 1 else None

    def vertex_of(self, x: str) -> str | None:
        if x in self.sort_of:
            p = self.pos[x]
            return p.vertex if p.edge is None else None
        return x

    def value(self, e: Expr, sigma: Binding) -> float:
        if isinstance(e, Num):
            return e.value
        if isinstance(e, SpeedLimit):
            return self.m.edges[sigma[e.edge]].speed
        return braking_distance(self.value(e.arg, sigma), self.vehicles[sigma[e.vehicle]].params)

    # --- candidate generation ---------------------------------------------

    def objects_at(self, p: Position) -> list[str]:
        if p.edge is None:
            return self._on_vertex.get(p.vertex, [])
        lst = self._on_edge.get(p.edge, [])
        i = bisect.bisect_left(lst, (p.offset - EPS_GEO, ""))
        out = []
        while i < len(lst) and lst[i][0] <= p.offset + EPS_GEO:
            out.append(lst[i][1])
            i += 1
        return out

    def objects_on_edge(self, e: str) -> list[str]:
        return [oid for _, oid in self._on_edge.get(e, ())]

    def objects_on_vertex(self, v: str) -> list[str]:
        return self._on_vertex.get(v, [])

    def heading_to(self, u: str) -> list[str]:
        """Vehicles whose current edge ends at vertex ``u``."""
        return self._heading_to.get(u, [])

    def in_same_cell(self, c: str) -> list[str]:
        cell = self.m.junction_of.get(self.cur[c])
        return [] if cell is None else self._in_cell[cell]


# --- atom evaluation ------------------------------------------------------

def eval_atom(atom: Atom, sigma: Binding, w: World) -> bool:
    match atom:
        case At(c, x):
            return _at(w, sigma[c], sigma[x])
        case EdgeMeets(c, x):
            return _edgemeets(w, sigma[c], sigma[x])
        case Meets(c, x):
            return _meets(w, sigma[c], sigma[x])
        case Junction(a, b):
            return w.m.same_junction(w.cur[sigma[a]], w.cur[sigma[b]])
        case EntryBefore(a, b):
            va, vb = w.vertex_of(sigma[a]), w.vertex_of(sigma[b])
            return va is not None and vb is not None and w.m.entry_before(va, vb)
        case Prio(u, a, b):
            ea, eb = w.in_edge(sigma[a], sigma[u]), w.in_edge(sigma[b], sigma[u])
            return ea is not None and eb is not None and w.m.lower_priority(sigma[u], ea, eb)
        case Color(light, value):
            return w.colors[sigma[light]] == value
        case SpeedCmp(c, op, rhs):
            return compare(w.vehicles[sigma[c]].speed, op, w.value(rhs, sigma))
        case BrakeCmp(c, op, target, offset):
            vid = sigma[c]
            v = w.vehicles[vid]
            x = w.locate_term(vid, target, sigma)
            d = INF if x is None else x - v.odo
            if offset is not None:
                d += w.value(offset, sigma)
            return compare(braking_distance(v.speed, v.params), op, d)
        case WaitCmp(a, op, b):
            return compare(w.vehicles[sigma[a]].wait_cycles, op, w.vehicles[sigma[b]].wait_cycles, 0)
        case LimitCmp(c, op, base, offset):
            vid = sigma[c]
            x = w.locate_term(vid, base, sigma)
            bound = INF if x is None else x + (w.value(offset, sigma) if offset is not None else 0.0)
            return compare(w.limits[vid], op, bound)
    raise TypeError(f"unknown atom {atom!r}")


def _at(w: World, c: str, x: str) -> bool:
    if x in w.sort_of:
        return w.pos[c].same(w.pos[x])
    if x in w.m.edges:
        return w.cur[c] == x
    p = w.pos[c]
    return p.edge is None and p.vertex == x


def _edgemeets(w: World, c: str, x: str) -> bool:
    v = w.vehicles[c]
    k = w.idx[c]
    if x in w.m.edges:
        return k + 1 < len(v.route.edges) and v.route.edges[k + 1] == x
    end = v.route.cum[k + 1]
    pos = w.locate(c, x, strict=True, horizon=end - v.odo)
    return pos is not None and pos <= end + EPS_GEO


def _meets(w: World, c: str, x: str) -> bool:
    if x in w.m.edges:
        return w.locate_pre(c, x, strict=True, horizon=R_MATCH) is not None
    return w.locate(c, x, strict=True, horizon=R_MATCH) is not None


# --- binding enumeration --------------------------------------------------

def _candidates(
    atom: Atom, var: str, sort: str, sigma: Binding, w: World, horizon: float = INF
) -> Iterable[str] | None:
    """Ids that could make ``atom`` true for ``var``; ``None`` if the atom cannot generate.

    With a finite ``horizon`` (an odometer on the bound vehicle's itinerary),
    things that can only be met at or beyond it are skipped.
    """
    match atom:
        case At(c, x) if x == var and c in sigma:
            p = w.pos[sigma[c]]
            if sort == "edge":
                return [w.cur[sigma[c]]]
            if sort == "vertex":
                return [p.vertex] if p.edge is None else []
            return w.objects_at(p)
        case EdgeMeets(c, x) if x == var and c in sigma:
            vid = sigma[c]
            route, k = w.vehicles[vid].route, w.idx[vid]
            end_vertex = w.m.edges[route.edges[k]].dst
            if sort in ("edge", "vertex") and route.cum[k + 1] >= horizon:
                return []
            if sort == "edge":
                return [route.edges[k + 1]] if k + 1 < len(route.edges) else []
            if sort == "vertex":
                return [end_vertex]
            return w.objects_on_edge(route.edges[k]) + w.objects_on_vertex(end_vertex) + w.objects_at(w.pos[vid])
        case Meets(c, x) if x == var and c in sigma:
            vid = sigma[c]
            v = w.vehicles[vid]
            route, k = v.route, w.idx[vid]
            reach = v.odo + R_MATCH
            out: list[str] = []
            while k < len(route.edges) and route.cum[k] <= reach and route.cum[k] < horizon:
                e = route.edges[k]
                if sort == "edge":
                    out.append(e)
                elif sort == "vertex":
                    out.append(w.m.edges[e].dst)
                else:
                    out += w.objects_on_edge(e)
                    out += w.objects_on_vertex(w.m.edges[e].src)
                    out += w.objects_on_vertex(w.m.edges[e].dst)
                k += 1
            return out
        case EdgeMeets(c, x) if c == var and x in sigma and sort == "vehicle" and sigma[x] in w.m.declared:
            return w.heading_to(sigma[x])
        case Junction(a, b) if sort == "vehicle" and (a == var and b in sigma or b == var and a in sigma):
            other = sigma[b] if a == var else sigma[a]
            return w.in_same_cell(other)
    return None


@dataclass(frozen=True)
class _Plan:
    order: tuple[tuple[str, str, Atom | None], ...]  # (var, sort, generator atom)
    checks: tuple[tuple[Atom, ...], ...]  # atoms to test once order[i] is bound
    distinct: tuple[tuple[str, ...], ...]  # earlier variables of the same sort as order[i]


def _plan(params: Sequence[tuple[str, str]], pre: Sequence[Atom]) -> _Plan:
    sorts = dict(params)
    ego = params[0][0]
    bound = [ego]
    order: list[tuple[str, str, Atom | None]] = [(ego, sorts[ego], None)]
    remaining = [v for v, _ in params[1:]]
    generating = (At, EdgeMeets, Meets, Junction)
    while remaining:
        pick = None
        for a in pre:
            if not isinstance(a, generating):
                continue
            vs = atom_vars(a)
            free = [v for v in vs if v not in bound]
            if len(free) != 1:
                continue
            v = free[0]
            if isinstance(a, Junction):
                if sorts[v] == "vehicle":
                    pick = (v, a)
            elif v == vs[-1] or isinstance(a, EdgeMeets) and v == vs[0] and sorts.get(vs[-1]) == "vertex":
                pick = (v, a)
            if pick:
                break
        if pick is None:
            pick = (remaining[0], None)
        v, gen = pick
        order.append((v, sorts[v], gen))
        bound.append(v)
        remaining.remove(v)
    checks = []
    done: set[int] = set()
    for i in range(len(order)):
        known = {v for v, _, _ in order[: i + 1]}
        now = []
        for j, a in enumerate(pre):
            if j not in done and set(atom_vars(a)) <= known:
                now.append(a)
                done.add(j)
        checks.append(tuple(now))
    distinct = tuple(
        tuple(v for v, s, _ in order[:i] if s == sort) for i, (_, sort, _) in enumerate(order)
    )
    return _Plan(tuple(order), tuple(checks), distinct)


class Matcher:
    """Enumerates satisfying bindings of rule preconditions."""

    def __init__(self, rules: Sequence[Rule | LimitRule], pre: Sequence[Sequence[Atom]] | None = None):
        self.rules = list(rules)
        pres = pre if pre is not None else [r.pre for r in self.rules]
        self.pre = [tuple(p) for p in pres]
        self.plans = [_plan(r.params, p) for r, p in zip(self.rules, self.pre)]
        self.prune = [_prune_level(r, pl) for r, pl in zip(self.rules, self.plans)]
        self.objects = [{sort for _, sort in r.params if sort in OBJECT_SORTS} for r in self.rules]

    def bindings(self, i: int, w: World, ego: str, horizon: float = INF) -> list[Binding]:
        """All satisfying bindings for ``ego``.

        A finite ``horizon`` may drop bindings whose bound would lie beyond it;
        bindings with a nearer bound are never dropped.
        """
        plan = self.plans[i]
        for sort in self.objects[i]:
            if not w.domains[sort]:
                return []
        cut = self.prune[i] if horizon < INF else None
        order, checks, distinct = plan.order, plan.checks, plan.distinct
        depth = len(order)
        out: list[Binding] = []
        sigma: Binding = {order[0][0]: ego}

        def go(level: int) -> None:
            if level == depth:
                out.append(dict(sigma))
                return
            var, sort, gen = order[level]
            cands = None
            if gen is not None:
                cands = _candidates(gen, var, sort, sigma, w, horizon if level == cut else INF)
            if cands is None:
                cands = w.domains[sort]
            elif len(cands) > 1:
                cands = sorted(set(cands))
            others = [sigma[v] for v in distinct[level]]
            for x in cands:
                if x in others or (sort in OBJECT_SORTS and w.sort_of.get(x) != sort):
                    continue
                sigma[var] = x
                for a in checks[level]:
                    if not eval_atom(a, sigma, w):
                        break
                else:
                    go(level + 1)
            sigma.pop(var, None)

        for a in checks[0]:
            if not eval_atom(a, sigma, w):
                return out
        go(1)
        return out


def _nonnegative(e: Expr | None) -> bool:
    return e is None or isinstance(e, BrakeOf) or (isinstance(e, Num) and e.value >= 0)


def _prune_level(rule: Rule | LimitRule, plan: _Plan) -> int | None:
    """Level whose generator binds the bound's base, if the bound never lies before the thing generated."""
    if not isinstance(rule, LimitRule):
        return None
    base = rule.bound.base
    if isinstance(base, Var):
        name, gens = base.name, (Meets, EdgeMeets)
    elif isinstance(base, Pre):
        name, gens = base.edge, (EdgeMeets,)
    else:
        return None
    if name == rule.ego or not _nonnegative(rule.bound.offset):
        return None
    for level, (var, sort, gen) in enumerate(plan.order):
        if var != name or not isinstance(gen, gens) or gen.c != rule.ego:
            continue
        if isinstance(gen, Meets) or sort in ("edge", "vertex"):
            return level
    return None


@dataclass(frozen=True)
class MatchedBound:
    rule: str
    binding: tuple[tuple[str, str], ...]
    odo: float


def bound_of(rule: LimitRule, sigma: Binding, w: World) -> float:
    ego = sigma[rule.ego]
    b = rule.bound
    x = w.locate_term(ego, b.base, sigma)
    if x is None:
        shown = ", ".join(f"{k}={v}" for k, v in sigma.items())
        raise RuleApplicationError(f"rule {rule.name} [{shown}]: {print_atom(b)} is not on the itinerary of {ego}")
    if b.offset is not None:
        x += w.value(b.offset, sigma)
    return x


def match_bounds(matcher: Matcher, w: World, egos: Iterable[str] | None = None) -> dict[str, list[MatchedBound]]:
    out: dict[str, list[MatchedBound]] = {}
    for ego in egos if egos is not None else w.vehicles:
        found = []
        for i, rule in enumerate(matcher.rules):
            for sigma in matcher.bindings(i, w, ego):
                found.append(MatchedBound(rule.name, tuple(sigma.items()), bound_of(rule, sigma, w)))
        out[ego] = found
    return out
