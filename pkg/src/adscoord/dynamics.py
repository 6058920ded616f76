"""Longitudinal vehicle dynamics and the region-based speed policy."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, replace

from .geometry import EPS_GEO
from .mapgraph import Position, Route
from .verdict import OK, Verdict, fail, vacuous

EPS_NUM = 1e-9

STOP_IN_CYCLE = "stop_in_cycle"
BRAKE = "brake"
HOLD = "hold"
ACCELERATE = "accelerate"
REGIONS = (STOP_IN_CYCLE, BRAKE, HOLD, ACCELERATE)


class ContractViolation(RuntimeError):
    def __init__(self, message: str, v: float = math.nan, f: float = math.nan):
        super().__init__(message)
        self.v = v
        self.f = f


@dataclass(frozen=True)
class KinematicParams:
    a_max: float
    b_max: float  # deceleration magnitude
    dt: float

    def __post_init__(self):
        for name in ("a_max", "b_max", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def braking_distance(v: float, params: KinematicParams) -> float:
    if v < 0:
        raise ValueError(f"negative speed {v}")
    return v * v / (2.0 * params.b_max)


def min_free_space(params: KinematicParams) -> float:
    a, dt = params.a_max, params.dt
    return braking_distance(a * dt, params) + a * dt * dt / 2


@dataclass(frozen=True)
class PolicyOutcome:
    new_speed: float
    displacement: float
    region: str


def _bounds(v: float, p: KinematicParams) -> tuple[float, float]:
    """Free-space thresholds separating the braking, holding and accelerating regions."""
    dt = p.dt
    hold_at = v * dt + braking_distance(v, p)
    accel_at = (v * dt + p.a_max * dt * dt / 2) + braking_distance(v + p.a_max * dt, p)
    return hold_at, accel_at


def firing_regions(v: float, f: float, p: KinematicParams) -> list[str]:
    """Every region whose defining condition holds at ``(v, f)``."""
    B = braking_distance(v, p)
    hold_at, accel_at = _bounds(v, p)
    out = []
    if f >= B and f < hold_at and v - p.b_max * p.dt < 0:
        out.append(STOP_IN_CYCLE)
    if f >= B and f < hold_at and v - p.b_max * p.dt >= 0:
        out.append(BRAKE)
    if f >= hold_at and f < accel_at:
        out.append(HOLD)
    if f >= accel_at:
        out.append(ACCELERATE)
    return out


def speed_policy(v: float, f: float, p: KinematicParams) -> PolicyOutcome:
    """Greedy choice of the largest acceleration that keeps ``delta' + B(v') <= f``."""
    B = braking_distance(v, p)
    if B > f + EPS_NUM:
        raise ContractViolation(f"speed policy assumption broken: B({v})={B} > f={f}", v, f)
    dt = p.dt
    hold_at, accel_at = _bounds(v, p)
    if f >= accel_at:
        return PolicyOutcome(v + p.a_max * dt, v * dt + p.a_max * dt * dt / 2, ACCELERATE)
    if f >= hold_at:
        return PolicyOutcome(v, v * dt, HOLD)
    if v - p.b_max * dt >= 0:
        return PolicyOutcome(v - p.b_max * dt, v * dt - p.b_max * dt * dt / 2, BRAKE)
    return PolicyOutcome(0.0, max(f, 0.0), STOP_IN_CYCLE)


SpeedPolicy = Callable[[float, float, KinematicParams], PolicyOutcome]


@dataclass(frozen=True)
class VehicleState:
    id: str
    route: Route
    odo: float
    speed: float
    params: KinematicParams
    displacement: float = 0.0
    wait_cycles: int = 0
    arrived: bool = False

    def __post_init__(self):
        if self.speed < 0 or self.displacement < 0 or self.wait_cycles < 0:
            raise ValueError(f"vehicle {self.id}: negative speed, displacement or waiting time")
        if self.wait_cycles and self.speed != 0:
            raise ValueError(f"vehicle {self.id}: waiting while moving")

    @property
    def position(self) -> Position:
        return self.route.position(self.odo)

    @property
    def waiting_time(self) -> float:
        return self.wait_cycles * self.params.dt

    @property
    def edge(self) -> str:
        return self.route.edges[self.route.index(self.odo)]

    @property
    def remaining(self) -> float:
        return self.route.total - self.odo

    def braking(self, v: float | None = None) -> float:
        return braking_distance(self.speed if v is None else v, self.params)


def apply_motion(st: VehicleState, out: PolicyOutcome) -> VehicleState:
    if out.displacement > st.remaining + EPS_GEO:
        raise ContractViolation(f"vehicle {st.id}: displacement {out.displacement} runs past the itinerary end")
    odo = min(st.odo + out.displacement, st.route.total)
    wait = st.wait_cycles + 1 if st.speed == 0 and out.new_speed == 0 else 0
    return replace(
        st,
        odo=odo,
        speed=out.new_speed,
        displacement=out.displacement,
        wait_cycles=wait,
        arrived=st.route.total - odo <= EPS_GEO and out.new_speed == 0,
    )


def check_vehicle_contract(pre: VehicleState, f: float, post: VehicleState) -> Verdict:
    v = pre.speed
    if v < 0 or pre.braking() > f + EPS_NUM:
        return vacuous("assumption", f"v={v} f={f}")
    v2, d2 = post.speed, post.displacement
    if v2 < -EPS_NUM:
        return fail("speed", f"{pre.id}: v'={v2}")
    if d2 < -EPS_NUM:
        return fail("displacement", f"{pre.id}: delta'={d2}")
    if d2 + braking_distance(max(v2, 0.0), pre.params) > f + EPS_NUM:
        return fail("free-space", f"{pre.id}: delta'+B(v')={d2 + braking_distance(max(v2, 0.0), pre.params)} > f={f}")
    if post.route is not pre.route or abs(post.odo - min(pre.odo + d2, pre.route.total)) > EPS_NUM:
        return fail("position", f"{pre.id}: moved {post.odo - pre.odo} for delta'={d2}")
    return OK


def check_vehicle_nonblocking(pre: VehicleState, f: float, post: VehicleState) -> Verdict:
    """A stopped vehicle granted at least ``f_min`` must start moving."""
    if pre.speed != 0 or f < min_free_space(pre.params):
        return vacuous("assumption")
    if post.speed > 0:
        return OK
    return fail("non-blocking", f"{pre.id}: f={f} >= f_min but v'=0")
