"""Cycle engine: scenario loading, the two-phase protocol, monitors and traces."""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import IO

from . import mapgraph
from .dynamics import (
    KinematicParams,
    SpeedPolicy,
    VehicleState,
    apply_motion,
    check_vehicle_contract,
    check_vehicle_nonblocking,
    speed_policy,
)
from .geometry import EPS_GEO
from .mapgraph import MapError, MapGraph, Position, Route
from .rules import (
    Color,
    LimitRule,
    Matcher,
    Rule,
    RuleError,
    World,
    builtin_text,
    eval_atom,
    is_speed_lower_closed,
    parse_rules,
    speed_lower_closure,
    to_limit_form,
)
from .runtime import (
    Allocation,
    PolicyTrace,
    ScenarioRejected,
    check_consistency,
    check_invariant,
    check_runtime_contract,
    free_space_policy,
    initial_allocation,
    limit_monotone,
)
from .verdict import FAIL, OK, Verdict, combine, fail, vacuous

WINDOW = 50
TRACE_FORMAT = "adscoord-trace/1"

MONITORS = (
    "vehicle-contract",
    "vehicle-nonblocking",
    "runtime-contract",
    "invariant-speed",
    "invariant-noncrossing",
    "limit-monotone",
    "consistency",
    "progress",
)


class LoadError(ValueError):
    """A map, scenario or rule file that cannot be run; ``report`` lists why."""

    def __init__(self, report: Sequence[str]):
        super().__init__("\n".join(report))
        self.report = list(report)


# --- scenario files -----------------------------------------------------

@dataclass(frozen=True)
class VehicleSpec:
    id: str
    edge: str
    offset: float
    speed: float
    a_max: float
    b_max: float
    itinerary: tuple[str, ...]


@dataclass(frozen=True)
class Light:
    id: str
    edge: str
    offset: float
    green: float
    red: float
    phase: float = 0.0

    def color(self, t: float) -> str:
        period = self.green + self.red
        x = math.fmod(t + self.phase, period)
        if x < 0:
            x += period
        return "green" if x < self.green - 1e-12 else "red"


@dataclass(frozen=True)
class ScenarioSpec:
    dt: float
    cycles: int
    vehicles: tuple[VehicleSpec, ...]
    stops: tuple[tuple[str, str, float], ...]
    lights: tuple[Light, ...]


def _at(word: str) -> tuple[str, float]:
    edge, sep, off = word.rpartition(":")
    if not sep or not edge:
        raise ValueError(f"expected <edge>:<offset>, got {word!r}")
    return edge, float(off)


def _kv(words: Sequence[str]) -> dict[str, str]:
    out = {}
    for w in words:
        k, sep, v = w.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {w!r}")
        out[k] = v
    return out


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse the line-oriented scenario format.

    ``itinerary=`` accepts an optional ``*k`` suffix repeating the edge list
    ``k`` times, which is how looping demo vehicles are written.
    """
    dt, cycles = None, None
    vehicles, stops, lights = [], [], []
    ids: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        try:
            if words[0].startswith("dt="):
                dt = float(words[0][3:])
            elif words[0].startswith("cycles="):
                cycles = int(words[0][7:])
            elif words[0] in ("vehicle", "stop", "light"):
                if len(words) < 4 or words[2] != "at":
                    raise ValueError(f"expected: {words[0]} <id> at <edge>:<offset> ...")
                oid = words[1]
                if oid in ids:
                    raise ValueError(f"duplicate id {oid}")
                ids.add(oid)
                edge, off = _at(words[3])
                kv = _kv(words[4:])
                if words[0] == "vehicle":
                    it, _, rep = kv["itinerary"].partition("*")
                    route = tuple(e for e in it.split(",") if e) * (int(rep) if rep else 1)
                    vehicles.append(VehicleSpec(oid, edge, off, float(kv.get("speed", 0)), float(kv["amax"]), float(kv["bmax"]), route))
                elif words[0] == "stop":
                    if kv:
                        raise ValueError("stop takes no options")
                    stops.append((oid, edge, off))
                else:
                    lights.append(Light(oid, edge, off, float(kv["green"]), float(kv["red"]), float(kv.get("offset", 0))))
            else:
                raise ValueError(f"unknown declaration {words[0]!r}")
            if len(words) > 1 and words[0].startswith(("dt=", "cycles=")):
                raise ValueError("trailing words")
        except KeyError as exc:
            raise LoadError([f"scenario line {lineno}: missing {exc.args[0]}="]) from None
        except ValueError as exc:
            raise LoadError([f"scenario line {lineno}: {exc}"]) from None
    problems = []
    if dt is None or not dt > 0:
        problems.append("scenario needs dt=<seconds> with dt > 0")
    if cycles is None or cycles < 1:
        problems.append("scenario needs cycles=<N> with N >= 1")
    for lt in lights:
        if not (lt.green > 0 and lt.red > 0):
            problems.append(f"light {lt.id}: green and red durations must be positive")
    if problems:
        raise LoadError(problems)
    return ScenarioSpec(dt, cycles, tuple(vehicles), tuple(stops), tuple(lights))


@dataclass
class Scenario:
    map: MapGraph
    dt: float
    cycles: int
    vehicles: dict[str, VehicleState]
    stops: dict[str, Position]
    lights: dict[str, Light]
    light_pos: dict[str, Position]
    rules: list[Rule]
    alloc: Allocation
    texts: dict[str, str] = field(default_factory=dict)

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for k in ("map", "scenario", "rules"):
            h.update(self.texts.get(k, "").encode())
            h.update(b"\0")
        return h.hexdigest()

    def colors(self, cycle: int) -> dict[str, str]:
        return {lid: lt.color(cycle * self.dt) for lid, lt in sorted(self.lights.items())}


def _object_position(m: MapGraph, what: str, edge: str, off: float) -> Position:
    if edge not in m.edges:
        raise ValueError(f"{what}: unknown edge {edge}")
    if not (-EPS_GEO <= off <= m.edges[edge].length + EPS_GEO):
        raise ValueError(f"{what}: offset {off} outside edge {edge} of length {m.edges[edge].length:.6g}")
    return m.position(edge, min(max(off, 0.0), m.edges[edge].length))


def _stop_order_problems(m: MapGraph, stops: Mapping[str, Position]) -> list[str]:
    """Stop signs guarding entries of one junction must be totally ordered by entry order."""
    by_cell: dict[int, set[str]] = {}
    for p in stops.values():
        if p.edge is not None:
            continue
        for e in m.out_edges[p.vertex]:
            if e in m.junction_of:
                by_cell.setdefault(m.junction_of[e], set()).add(p.vertex)
    out = []
    for cell, vs in sorted(by_cell.items()):
        vs = sorted(vs)
        for i, a in enumerate(vs):
            for b in vs[i + 1:]:
                if not (m.entry_before(a, b) or m.entry_before(b, a)):
                    out.append(f"junction {' '.join(m.junctions[cell])}: stop entries {a} and {b} need an entry_order")
    return out


def load_scenario(map_text: str, scenario_text: str, rules_text: str | None = None) -> Scenario:
    try:
        m = mapgraph.parse_map(map_text)
    except MapError as exc:
        raise LoadError([f"map: {exc}"]) from None
    report = mapgraph.validate_2d(m)
    if report:
        raise LoadError([f"map: {line}" for line in report.lines()])
    spec = parse_scenario(scenario_text)
    rules_src = builtin_text() if rules_text is None else rules_text
    try:
        rules = parse_rules(rules_src)
    except RuleError as exc:
        raise LoadError([f"rules: {exc}"]) from None

    problems: list[str] = []
    vehicles: dict[str, VehicleState] = {}
    for vs in spec.vehicles:
        try:
            params = KinematicParams(vs.a_max, vs.b_max, spec.dt)
            if not vs.itinerary or vs.itinerary[0] != vs.edge:
                raise ValueError(f"starts on {vs.edge}, off its itinerary's first edge")
            for e in vs.itinerary:
                if e not in m.edges:
                    raise ValueError(f"itinerary uses unknown edge {e}")
            route = Route(m, vs.itinerary)
            if not (-EPS_GEO <= vs.offset <= m.edges[vs.edge].length + EPS_GEO):
                raise ValueError(f"offset {vs.offset} outside edge {vs.edge}")
            vehicles[vs.id] = VehicleState(vs.id, route, min(max(vs.offset, 0.0), m.edges[vs.edge].length), vs.speed, params)
        except ValueError as exc:
            problems.append(f"vehicle {vs.id}: {exc}")
    stops, lights, light_pos = {}, {}, {}
    for sid, edge, off in spec.stops:
        try:
            stops[sid] = _object_position(m, f"stop {sid}", edge, off)
        except ValueError as exc:
            problems.append(str(exc))
    for lt in spec.lights:
        try:
            light_pos[lt.id] = _object_position(m, f"light {lt.id}", lt.edge, lt.offset)
            lights[lt.id] = lt
        except ValueError as exc:
            problems.append(str(exc))
    if problems:
        raise LoadError(problems)
    problems += [f"speed limits: {p}" for p in mapgraph.check_speed_limit_compatibility(m, {v.id: v.params.b_max for v in vehicles.values()})]
    problems += _stop_order_problems(m, stops)
    if problems:
        raise LoadError(problems)
    try:
        alloc = initial_allocation(vehicles, m, stops)
    except ScenarioRejected as exc:
        raise LoadError([f"initial state: {p}" for p in exc.problems]) from None
    texts = {"map": map_text, "scenario": scenario_text, "rules": rules_src}
    return Scenario(m, spec.dt, spec.cycles, vehicles, stops, lights, light_pos, rules, alloc, texts)


# --- states and monitors -------------------------------------------------

@dataclass
class Snapshot:
    """System state at one cycle boundary, after despawn and allocation.

    ``moved`` holds every vehicle right after its move, including the ones
    that arrived and were removed from ``vehicles``.
    """

    cycle: int
    vehicles: dict[str, VehicleState]
    alloc: Allocation
    colors: dict[str, str]
    moved: dict[str, VehicleState] = field(default_factory=dict)
    regions: dict[str, str] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)
    stopped_run: int = 0
    world: World | None = None


def _stopped_run(prev: Snapshot | None, vehicles: Mapping[str, VehicleState]) -> int:
    if not vehicles or any(v.speed > 0 for v in vehicles.values()):
        return 0
    return (prev.stopped_run if prev is not None else 0) + 1


def _vars_of_sort(rule: Rule, sort: str) -> list[str]:
    return [n for n, s in rule.params if s == sort]


class Monitors:
    """Every per-cycle check, shared by the simulator and the offline checker.

    Rules whose precondition is closed under dropping speed lower bounds are
    checked in that closed form; the others in their original form. Either
    way the obligation found in one state must hold in the next one.
    """

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.rules = sc.rules
        pres = [r.pre if not is_speed_lower_closed(r) else speed_lower_closure(r.pre) for r in self.rules]
        self.matcher = Matcher(self.rules, pres)
        self.names = list(MONITORS) + [f"rule:{r.name}" for r in self.rules]
        # Rules reading light colors are monitored but outside the safety argument:
        # a light may turn red after a vehicle was already granted passage.
        self.advisory = {f"rule:{r.name}" for r in self.rules if any(isinstance(a, Color) for a in r.pre)}

    def world(self, snap: Snapshot, limits: Mapping[str, float] | None = None) -> World:
        sc = self.sc
        return World(sc.map, snap.vehicles, sc.stops, sc.light_pos, snap.colors, limits)

    def initial(self, snap: Snapshot) -> dict[str, Verdict]:
        out = {name: vacuous("initial") for name in self.names}
        out.update(self._state_checks(snap))
        return out

    def _state_checks(self, snap: Snapshot) -> dict[str, Verdict]:
        m = self.sc.map
        speed, crossing = check_invariant(snap.vehicles, snap.alloc, m)
        prog = OK if snap.stopped_run < WINDOW else fail("deadlock-window", f"all vehicles stopped for {snap.stopped_run} cycles")
        return {
            "invariant-speed": speed,
            "invariant-noncrossing": crossing,
            "consistency": check_consistency(snap.vehicles, snap.alloc, m, self.sc.stops).verdict(),
            "progress": prog,
        }

    def transition(self, prev: Snapshot, cur: Snapshot, prev_world: World, cur_world: World) -> dict[str, Verdict]:
        m = self.sc.map
        out: dict[str, Verdict] = {}
        vc, nb = [], []
        for vid, pre in prev.vehicles.items():
            f = prev.alloc.free(pre)
            post = cur.moved[vid]
            vc.append(check_vehicle_contract(pre, f, post))
            nb.append(check_vehicle_nonblocking(pre, f, post))
        out["vehicle-contract"] = combine(*vc)
        out["vehicle-nonblocking"] = combine(*nb)
        prev_odo = {vid: prev.vehicles[vid].odo for vid in cur.vehicles}
        out["runtime-contract"] = check_runtime_contract(cur.vehicles, prev_odo, prev.alloc, cur.alloc, m)
        out["limit-monotone"] = limit_monotone(prev.alloc, cur.alloc)
        out.update(self._state_checks(cur))
        for i, rule in enumerate(self.rules):
            out[f"rule:{rule.name}"] = self._rule(i, rule, prev_world, cur_world)
        return {name: out[name] for name in self.names}

    def _rule(self, i: int, rule: Rule, before: World, after: World) -> Verdict:
        present = after.vehicles
        vehicle_vars = _vars_of_sort(rule, "vehicle")
        found = False
        for vid in before.vehicles:
            if vid not in present:
                continue
            for sigma in self.matcher.bindings(i, before, vid):
                if any(sigma[x] not in present for x in vehicle_vars):
                    continue
                found = True
                if not eval_atom(rule.post, sigma, after):
                    detail = ", ".join(f"{k}={v}" for k, v in sigma.items())
                    return fail("rule", f"{rule.name} broken for {detail}")
        return OK if found else vacuous("no-match")


# --- the cycle engine ----------------------------------------------------

Forge = Callable[[Allocation, Snapshot], Allocation]


class Simulation:
    def __init__(
        self,
        sc: Scenario,
        policy: SpeedPolicy = speed_policy,
        monitors: bool = True,
        forge: Forge | None = None,
    ):
        self.sc = sc
        self.policy = policy
        self.forge = forge
        self.limit_rules: list[LimitRule] = [to_limit_form(r) for r in sc.rules]
        self.matcher = Matcher(self.limit_rules)
        self.monitors = Monitors(sc) if monitors else None
        self.state = Snapshot(0, dict(sorted(sc.vehicles.items())), sc.alloc, sc.colors(0), moved=dict(sc.vehicles))
        self.state.stopped_run = _stopped_run(None, self.state.vehicles)
        self.state.world = World(sc.map, self.state.vehicles, sc.stops, sc.light_pos, self.state.colors)
        self.verdicts: dict[str, Verdict] = self.monitors.initial(self.state) if self.monitors else {}

    def step(self) -> tuple[Snapshot, dict[str, Verdict]]:
        sc, prev = self.sc, self.state
        moved, regions = {}, {}
        for vid, v in prev.vehicles.items():
            out = self.policy(v.speed, prev.alloc.free(v), v.params)
            moved[vid] = apply_motion(v, out)
            regions[vid] = out.region
        cycle = prev.cycle + 1
        colors = sc.colors(cycle)
        present = {vid: v for vid, v in moved.items() if not v.arrived}
        world = World(sc.map, present, sc.stops, sc.light_pos, colors, prev.alloc.limits)
        trace = PolicyTrace()
        alloc = free_space_policy(world, Allocation({vid: prev.alloc.limits[vid] for vid in present}, prev.cycle), self.matcher, trace)
        cur = Snapshot(cycle, present, alloc, colors, moved, regions, trace.source)
        if self.forge is not None:
            cur.alloc = self.forge(alloc, cur)
        cur.stopped_run = _stopped_run(prev, present)
        cur.world = world
        verdicts = self.monitors.transition(prev, cur, prev.world, world) if self.monitors else {}
        self.state, self.verdicts = cur, verdicts
        return cur, verdicts


# --- traces --------------------------------------------------------------

class TraceError(ValueError):
    pass


def _vehicle_record(v: VehicleState, snap: Snapshot) -> dict:
    p = v.position
    rec = {
        "pos": p.vertex if p.edge is None else f"{p.edge}:{p.offset!r}",
        "odo": v.odo,
        "disp": v.displacement,
        "speed": v.speed,
        "waiting": v.waiting_time,
        "wait_cycles": v.wait_cycles,
        "arrived": v.arrived,
        "region": snap.regions.get(v.id),
    }
    if v.id in snap.alloc.limits:
        lim = snap.alloc.limits[v.id]
        rec.update(free=lim - v.odo, limit=lim, source=snap.sources.get(v.id))
    else:
        rec.update(free=None, limit=None, source=None)
    return rec


def cycle_record(snap: Snapshot, verdicts: Mapping[str, Verdict], dt: float) -> dict:
    return {
        "cycle": snap.cycle,
        "t": snap.cycle * dt,
        "vehicles": {vid: _vehicle_record(v, snap) for vid, v in sorted(snap.moved.items())},
        "lights": dict(snap.colors),
        "verdicts": {k: v.to_json() for k, v in verdicts.items()},
    }


@dataclass
class RunResult:
    reason: str  # budget | all-arrived | violation | deadlock-window
    records: int
    violations: dict[str, int]
    error: str | None = None
    first_failure: str | None = None

    def summary(self) -> dict:
        return {
            "summary": True,
            "reason": self.reason,
            "records": self.records,
            "violations": self.violations,
            "error": self.error,
            "first_failure": self.first_failure,
        }


def header(sc: Scenario, sim: Simulation) -> dict:
    return {
        "format": TRACE_FORMAT,
        "digest": sc.digest,
        "dt": sc.dt,
        "window": WINDOW,
        "monitors": sim.monitors.names if sim.monitors else [],
        "texts": sc.texts,
    }


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def run(
    sc: Scenario,
    out: IO[str] | None = None,
    cycles: int | None = None,
    monitors: bool = True,
    policy: SpeedPolicy = speed_policy,
    forge: Forge | None = None,
    on_record: Callable[[Snapshot, dict[str, Verdict]], None] | None = None,
) -> RunResult:
    """Run ``cycles`` records (default: the scenario budget); record 0 is the initial state."""
    sim = Simulation(sc, policy, monitors, forge)
    budget = sc.cycles if cycles is None else cycles
    counts = {name: 0 for name in (sim.monitors.names if sim.monitors else [])}
    advisory = sim.monitors.advisory if sim.monitors else set()
    result = RunResult("budget", 0, counts)

    def emit(snap: Snapshot, verdicts: dict[str, Verdict]) -> str | None:
        result.records += 1
        if out is not None:
            out.write(_dump(cycle_record(snap, verdicts, sc.dt)) + "\n")
        if on_record is not None:
            on_record(snap, verdicts)
        reason = None
        for name, v in verdicts.items():
            if v.status == FAIL:
                counts[name] += 1
                if result.first_failure is None and name not in advisory:
                    result.first_failure = f"cycle {snap.cycle} {name}: {v.clause} {v.detail}".strip()
                if name in advisory:
                    continue
                if name != "progress":
                    reason = "violation"
                elif reason is None:
                    reason = "deadlock-window"
        return reason

    if out is not None:
        out.write(_dump(header(sc, sim)) + "\n")
    reason = emit(sim.state, sim.verdicts)
    while reason is None and result.records < budget:
        if not sim.state.vehicles:
            reason = "all-arrived"
            break
        try:
            snap, verdicts = sim.step()
        except (ValueError, RuntimeError) as exc:
            result.error = f"cycle {sim.state.cycle + 1}: {type(exc).__name__}: {exc}"
            reason = "violation"
            break
        reason = emit(snap, verdicts)
    result.reason = reason or "budget"
    if out is not None:
        out.write(_dump(result.summary()) + "\n")
    return result


def read_trace(lines: Sequence[str]) -> tuple[dict, list[dict], dict]:
    """Split a trace into header, cycle records and summary; raise on malformed input."""
    try:
        objs = [json.loads(line) for line in lines if line.strip()]
    except json.JSONDecodeError as exc:
        raise TraceError(f"malformed trace line: {exc}") from None
    if not objs or objs[0].get("format") != TRACE_FORMAT:
        raise TraceError("missing trace header")
    if len(objs) < 2 or not objs[-1].get("summary"):
        raise TraceError("trace is truncated: no summary line")
    head, records, summary = objs[0], objs[1:-1], objs[-1]
    for i, rec in enumerate(records):
        if rec.get("cycle") != i:
            raise TraceError(f"record {i} has cycle {rec.get('cycle')}; indices must be contiguous from 0")
    if summary.get("records") != len(records):
        raise TraceError(f"summary counts {summary.get('records')} records, trace has {len(records)}")
    return head, records, summary


def _snapshot_from(rec: dict, sc: Scenario, prev: Snapshot | None) -> Snapshot:
    moved, limits = {}, {}
    for vid, r in rec["vehicles"].items():
        base = sc.vehicles.get(vid)
        if base is None:
            raise TraceError(f"cycle {rec['cycle']}: unknown vehicle {vid}")
        moved[vid] = replace(
            base, odo=r["odo"], speed=r["speed"], displacement=r["disp"], wait_cycles=r["wait_cycles"], arrived=r["arrived"]
        )
        if r["limit"] is not None:
            limits[vid] = r["limit"]
    present = {vid: v for vid, v in moved.items() if not v.arrived}
    snap = Snapshot(rec["cycle"], present, Allocation(limits, rec["cycle"]), dict(rec["lights"]), moved)
    snap.stopped_run = _stopped_run(prev, present)
    return snap


def check_trace(lines: Sequence[str]) -> list[str]:
    """Re-evaluate every monitor from the recorded states.

    Returns mismatches between recomputed and recorded verdicts, failing
    verdicts, and records whose derived fields disagree with their state.
    """
    head, records, summary = read_trace(lines)
    texts = head.get("texts", {})
    sc = load_scenario(texts.get("map", ""), texts.get("scenario", ""), texts.get("rules"))
    if sc.digest != head.get("digest"):
        raise TraceError("trace digest does not match its embedded inputs")
    mon = Monitors(sc)
    problems: list[str] = []
    prev: Snapshot | None = None
    prev_world: World | None = None
    for rec in records:
        i = rec["cycle"]
        try:
            snap = _snapshot_from(rec, sc, prev)
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"cycle {i}: malformed record ({exc})") from None
        for vid, r in rec["vehicles"].items():
            v = snap.moved[vid]
            if r["limit"] is not None and r["free"] != r["limit"] - v.odo:
                problems.append(f"cycle {i} {vid}: free_space {r['free']!r} does not match limit - position {r['limit'] - v.odo!r}")
            if (r["limit"] is None) != v.arrived:
                problems.append(f"cycle {i} {vid}: limit present iff not arrived")
            if r["waiting"] != v.waiting_time:
                problems.append(f"cycle {i} {vid}: waiting {r['waiting']!r} != {v.wait_cycles} cycles")
        if prev is not None and set(snap.moved) != set(prev.vehicles):
            problems.append(f"cycle {i}: vehicle set differs from the vehicles present at cycle {i - 1}")
            break
        if rec["lights"] != sc.colors(i):
            problems.append(f"cycle {i}: light colors differ from the schedule")
        world = mon.world(snap)
        if prev is None:
            verdicts = mon.initial(snap)
        else:
            verdicts = mon.transition(prev, snap, prev_world, world)
        recorded = rec.get("verdicts", {})
        for name in mon.names:
            got = verdicts[name].to_json()
            if recorded.get(name) != got:
                problems.append(f"cycle {i} {name}: recorded {recorded.get(name)} recomputed {got}")
            elif got[0] == FAIL:
                problems.append(f"cycle {i} {name}: {got[1]} {got[2]}".rstrip())
        prev, prev_world = snap, world
    if summary.get("error"):
        problems.append(f"run stopped on error: {summary['error']}")
    return problems
