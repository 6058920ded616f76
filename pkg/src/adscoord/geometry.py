"""Planar curve primitives and the segment algebra used to label map edges.

A segment is a G1-continuous chain of straight lines and circular arcs.
Angles are absolute within the segment's own frame; placing a segment in
the plane applies a translation (``origin``) and a rotation (``heading``).
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

EPS_GEO = 1e-6

Point = tuple[float, float]


class SegmentRangeError(ValueError):
    """Arclength argument outside the segment."""


def _wrap(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(angle, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    elif a > math.pi:
        a -= 2 * math.pi
    return a


@dataclass(frozen=True)
class Line:
    a: float
    phi: float

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"line length must be > 0, got {self.a}")

    @property
    def length(self) -> float:
        return self.a

    def local(self, t: float) -> Point:
        return (self.a * t * math.cos(self.phi), self.a * t * math.sin(self.phi))

    def heading(self, t: float) -> float:
        return self.phi

    def end_heading(self) -> float:
        return self.phi

    def trim(self, d0: float, d1: float) -> Line:
        return Line(d1 - d0, self.phi)

    def text(self) -> str:
        return f"line:{self.a!r}:{self.phi!r}"


@dataclass(frozen=True)
class Arc:
    r: float
    phi: float
    theta: float

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"arc radius must be > 0, got {self.r}")
        if self.theta == 0 or not math.isfinite(self.theta):
            raise ValueError("arc sweep must be nonzero")

    @property
    def length(self) -> float:
        return self.r * abs(self.theta)

    @property
    def sign(self) -> float:
        return 1.0 if self.theta > 0 else -1.0

    def local(self, t: float) -> Point:
        # the sign factor keeps phi the initial slope for clockwise sweeps too
        s, r, phi = self.sign, self.r, self.phi
        u = phi + t * self.theta
        return (s * r * (math.sin(u) - math.sin(phi)), s * r * (math.cos(phi) - math.cos(u)))

    def heading(self, t: float) -> float:
        return self.phi + t * self.theta

    def end_heading(self) -> float:
        return self.phi + self.theta

    def trim(self, d0: float, d1: float) -> Arc:
        L = self.length
        return Arc(self.r, self.phi + self.theta * d0 / L, self.theta * (d1 - d0) / L)

    def text(self) -> str:
        return f"arc:{self.r!r}:{self.phi!r}:{self.theta!r}"


Primitive = Line | Arc


@dataclass(frozen=True)
class Segment:
    prims: tuple[Primitive, ...]
    cum: tuple[float, ...] = field(init=False, repr=False, compare=False)
    starts: tuple[Point, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.prims:
            raise ValueError("segment needs at least one primitive")
        cum = [0.0]
        starts = [(0.0, 0.0)]
        for p in self.prims:
            cum.append(cum[-1] + p.length)
            x, y = starts[-1]
            dx, dy = p.local(1.0)
            starts.append((x + dx, y + dy))
        object.__setattr__(self, "prims", tuple(self.prims))
        object.__setattr__(self, "cum", tuple(cum))
        object.__setattr__(self, "starts", tuple(starts))

    @classmethod
    def of(cls, *prims: Primitive) -> Segment:
        return cls(tuple(prims))

    @property
    def length(self) -> float:
        return self.cum[-1]

    @property
    def start_heading(self) -> float:
        return self.prims[0].phi

    @property
    def end_heading(self) -> float:
        return self.prims[-1].end_heading()

    def _locate(self, d: float) -> tuple[int, float]:
        if d < -EPS_GEO or d > self.length + EPS_GEO:
            raise SegmentRangeError(f"arclength {d} outside [0, {self.length}]")
        d = min(max(d, 0.0), self.length)
        for i, p in enumerate(self.prims):
            if d <= self.cum[i + 1] or i == len(self.prims) - 1:
                return i, d - self.cum[i]
        raise AssertionError("unreachable")

    def local_eval(self, d: float) -> tuple[Point, float]:
        i, dl = self._locate(d)
        p = self.prims[i]
        t = min(max(dl / p.length, 0.0), 1.0)
        x0, y0 = self.starts[i]
        dx, dy = p.local(t)
        return (x0 + dx, y0 + dy), p.heading(t)

    def text(self) -> str:
        return ";".join(p.text() for p in self.prims)


def length(seg: Segment) -> float:
    return seg.length


def _place(pt: Point, origin: Point, heading: float) -> Point:
    c, s = math.cos(heading), math.sin(heading)
    return (origin[0] + c * pt[0] - s * pt[1], origin[1] + s * pt[0] + c * pt[1])


def eval(seg: Segment, d: float, origin: Point = (0.0, 0.0), heading: float = 0.0) -> tuple[Point, float]:
    """Point and tangent heading at arclength ``d`` of a placed segment."""
    pt, h = seg.local_eval(d)
    return _place(pt, origin, heading), h + heading


def concat(s1: Segment, s2: Segment) -> Segment | None:
    """G1 concatenation; ``None`` when the tangent headings disagree."""
    if abs(_wrap(s1.end_heading - s2.start_heading)) > EPS_GEO:
        return None
    return Segment(s1.prims + s2.prims)


def subsegment(seg: Segment, a: float, b: float) -> Segment:
    if not (0 <= a < b <= seg.length + EPS_GEO) or b - a <= 0:
        raise SegmentRangeError(f"bad subsegment [{a}, {b}] of length {seg.length}")
    b = min(b, seg.length)
    out = []
    for i, p in enumerate(seg.prims):
        lo, hi = seg.cum[i], seg.cum[i + 1]
        d0, d1 = max(a, lo), min(b, hi)
        if d1 - d0 > 1e-12:
            out.append(p.trim(d0 - lo, d1 - lo))
    return Segment(tuple(out))


def parse_segment(text: str) -> Segment:
    """Parse ``line:<a>:<phi>`` / ``arc:<r>:<phi>:<theta>`` chained with ``;``."""
    prims: list[Primitive] = []
    for tok in text.strip().split(";"):
        parts = tok.strip().split(":")
        kind, nums = parts[0], parts[1:]
        try:
            vals = [float(v) for v in nums]
        except ValueError:
            raise ValueError(f"bad number in primitive {tok!r}") from None
        if kind == "line" and len(vals) == 2:
            prims.append(Line(*vals))
        elif kind == "arc" and len(vals) == 3:
            prims.append(Arc(*vals))
        else:
            raise ValueError(f"bad primitive {tok!r}")
    seg = Segment(tuple(prims))
    for p, q in zip(seg.prims, seg.prims[1:]):
        if abs(_wrap(p.end_heading() - q.phi)) > EPS_GEO:
            raise ValueError(f"heading discontinuity in segment {text!r}")
    return seg


# --- crossings -------------------------------------------------------------

@dataclass(frozen=True)
class _PlacedLine:
    p0: Point
    u: Point  # unit direction
    length: float
    d0: float  # arclength offset of this primitive within its segment


@dataclass(frozen=True)
class _PlacedArc:
    center: Point
    r: float
    alpha0: float  # polar angle of the start point around the center
    sweep: float  # signed
    length: float
    d0: float


def _placed_prims(seg: Segment, origin: Point, heading: float) -> Iterator[_PlacedLine | _PlacedArc]:
    for i, p in enumerate(seg.prims):
        start = _place(seg.starts[i], origin, heading)
        h = p.phi + heading
        if isinstance(p, Line):
            yield _PlacedLine(start, (math.cos(h), math.sin(h)), p.a, seg.cum[i])
        else:
            s = p.sign
            c = (start[0] - s * p.r * math.sin(h), start[1] + s * p.r * math.cos(h))
            yield _PlacedArc(c, p.r, h - s * math.pi / 2, p.theta, p.length, seg.cum[i])


def _arc_param(a: _PlacedArc, pt: Point) -> list[float]:
    """Arclengths along ``a`` (local) at which it passes through angle of ``pt``."""
    ang = math.atan2(pt[1] - a.center[1], pt[0] - a.center[0])
    s = 1.0 if a.sweep > 0 else -1.0
    delta = math.fmod(s * (ang - a.alpha0), 2 * math.pi)
    if delta < 0:
        delta += 2 * math.pi
    out = []
    tol = EPS_GEO / a.r
    span = abs(a.sweep)
    if delta > 2 * math.pi - tol:
        delta -= 2 * math.pi
    while delta <= span + tol:
        if delta >= -tol:
            out.append(min(max(delta, 0.0), span) * a.r)
        delta += 2 * math.pi
    return out


def _line_param(ln: _PlacedLine, pt: Point) -> float | None:
    t = (pt[0] - ln.p0[0]) * ln.u[0] + (pt[1] - ln.p0[1]) * ln.u[1]
    if -EPS_GEO <= t <= ln.length + EPS_GEO:
        return min(max(t, 0.0), ln.length)
    return None


def _point_of(p, d: float) -> Point:
    if isinstance(p, _PlacedLine):
        return (p.p0[0] + d * p.u[0], p.p0[1] + d * p.u[1])
    s = 1.0 if p.sweep > 0 else -1.0
    ang = p.alpha0 + s * d / p.r
    return (p.center[0] + p.r * math.cos(ang), p.center[1] + p.r * math.sin(ang))


def _ends(p) -> list[Point]:
    return [_point_of(p, 0.0), _point_of(p, p.length)]


def _params_on(p, pt: Point) -> list[float]:
    if isinstance(p, _PlacedLine):
        t = _line_param(p, pt)
        if t is None:
            return []
        q = _point_of(p, t)
        return [t] if math.dist(q, pt) <= EPS_GEO else []
    if abs(math.dist(pt, p.center) - p.r) > EPS_GEO:
        return []
    return _arc_param(p, pt)


def _candidates(p, q) -> list[Point]:
    """Candidate intersection points of the supporting line/circle pair."""
    pts: list[Point] = []
    if isinstance(p, _PlacedLine) and isinstance(q, _PlacedLine):
        cross = p.u[0] * q.u[1] - p.u[1] * q.u[0]
        if abs(cross) > 1e-12:
            wx, wy = q.p0[0] - p.p0[0], q.p0[1] - p.p0[1]
            t = (wx * q.u[1] - wy * q.u[0]) / cross
            pts.append(_point_of(p, t))
        else:
            # parallel or collinear: contact only through endpoints
            pts.extend(_ends(p) + _ends(q))
        return pts
    if isinstance(p, _PlacedArc) and isinstance(q, _PlacedLine):
        p, q = q, p
    if isinstance(p, _PlacedLine) and isinstance(q, _PlacedArc):
        fx, fy = p.p0[0] - q.center[0], p.p0[1] - q.center[1]
        b = fx * p.u[0] + fy * p.u[1]
        c = fx * fx + fy * fy - q.r * q.r
        disc = b * b - c
        if disc < 0:
            # near tangency still counts when the gap is below the tolerance
            t = -b
            foot = _point_of(p, t)
            if abs(math.dist(foot, q.center) - q.r) <= EPS_GEO:
                pts.append(foot)
            return pts
        sq = math.sqrt(disc)
        pts.extend(_point_of(p, t) for t in (-b - sq, -b + sq))
        return pts
    # circle-circle
    d = math.dist(p.center, q.center)
    if d < 1e-12:
        if abs(p.r - q.r) <= EPS_GEO:
            pts.extend(_ends(p) + _ends(q))
        return pts
    if d > p.r + q.r + EPS_GEO or d < abs(p.r - q.r) - EPS_GEO:
        return pts
    a = (p.r * p.r - q.r * q.r + d * d) / (2 * d)
    h = math.sqrt(max(p.r * p.r - a * a, 0.0))
    ex, ey = (q.center[0] - p.center[0]) / d, (q.center[1] - p.center[1]) / d
    mx, my = p.center[0] + a * ex, p.center[1] + a * ey
    pts.append((mx - h * ey, my + h * ex))
    pts.append((mx + h * ey, my - h * ex))
    return pts


def _raw_crossings(prims1: Sequence, prims2: Sequence) -> list[tuple[float, float]]:
    found: list[tuple[float, float]] = []
    for p in prims1:
        for q in prims2:
            for pt in _candidates(p, q):
                for t1 in _params_on(p, pt):
                    for t2 in _params_on(q, pt):
                        found.append((p.d0 + t1, q.d0 + t2))
    found.sort()
    out: list[tuple[float, float]] = []
    for d1, d2 in found:
        # contact intervals (overlaps) and primitive joints collapse to one pair
        if any(abs(d1 - e1) <= 10 * EPS_GEO and abs(d2 - e2) <= 10 * EPS_GEO for e1, e2 in out):
            continue
        out.append((d1, d2))
    return out


def crossings(
    s1: Segment,
    s2: Segment,
    origin1: Point = (0.0, 0.0),
    heading1: float = 0.0,
    origin2: Point = (0.0, 0.0),
    heading2: float = 0.0,
) -> list[tuple[float, float]]:
    """Arclength pairs where two placed segments meet, within ``EPS_GEO``."""
    k1 = (s1.text(), origin1, heading1)
    k2 = (s2.text(), origin2, heading2)
    if k1 <= k2:
        return _raw_crossings(list(_placed_prims(s1, origin1, heading1)), list(_placed_prims(s2, origin2, heading2)))
    # computed in a canonical order so the result is exactly symmetric
    swapped = _raw_crossings(list(_placed_prims(s2, origin2, heading2)), list(_placed_prims(s1, origin1, heading1)))
    return sorted((b, a) for a, b in swapped)


def self_crossings(seg: Segment, origin: Point = (0.0, 0.0), heading: float = 0.0) -> list[tuple[float, float]]:
    """Pairs ``d1 < d2`` of distinct arclengths mapping to the same point."""
    prims = list(_placed_prims(seg, origin, heading))
    out = []
    for i, p in enumerate(prims):
        for q in prims[i:]:
            for d1, d2 in _raw_crossings([p], [q]):
                if d2 - d1 > 10 * EPS_GEO:
                    out.append((d1, d2))
        if isinstance(p, _PlacedArc) and abs(p.sweep) >= 2 * math.pi - 1e-9:
            out.append((p.d0, p.d0 + 2 * math.pi * p.r))
    return sorted(set(out))
