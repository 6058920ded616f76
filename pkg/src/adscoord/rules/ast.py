"""Rule syntax trees.

Variables are referred to by name; the quantifier prefix of a rule fixes
their sorts. Position terms denote map positions, expressions denote
non-negative reals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

SORTS = ("vehicle", "stop_sign", "traffic_light", "vertex", "edge")
OPS = ("<=", "<", "=", ">=", ">")
LOWER_OPS = (">=", ">")


# --- position terms -------------------------------------------------------

@dataclass(frozen=True)
class Var:
    """Position of an object, vehicle or vertex bound to ``name``."""

    name: str


@dataclass(frozen=True)
class Pre:
    edge: str


@dataclass(frozen=True)
class Post:
    edge: str


Term = Union[Var, Pre, Post]


# --- expressions ----------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class SpeedLimit:
    edge: str


@dataclass(frozen=True)
class BrakeOf:
    vehicle: str
    arg: Expr


Expr = Union[Num, SpeedLimit, BrakeOf]


# --- atoms ----------------------------------------------------------------

@dataclass(frozen=True)
class At:
    c: str
    x: str


@dataclass(frozen=True)
class EdgeMeets:
    c: str
    x: str


@dataclass(frozen=True)
class Meets:
    c: str
    x: str


@dataclass(frozen=True)
class Junction:
    a: str
    b: str


@dataclass(frozen=True)
class EntryBefore:
    a: str
    b: str


@dataclass(frozen=True)
class Prio:
    u: str
    a: str
    b: str


@dataclass(frozen=True)
class Color:
    light: str
    value: str


@dataclass(frozen=True)
class SpeedCmp:
    c: str
    op: str
    rhs: Expr


@dataclass(frozen=True)
class BrakeCmp:
    """``B_c(v_c) op d(pos_c, target) + offset``."""

    c: str
    op: str
    target: Term
    offset: Expr | None = None


@dataclass(frozen=True)
class WaitCmp:
    a: str
    op: str
    b: str


@dataclass(frozen=True)
class LimitCmp:
    """``limit_c op base (+)_c offset`` along the itinerary of ``c``."""

    c: str
    op: str
    base: Term
    offset: Expr | None = None


Atom = Union[At, EdgeMeets, Meets, Junction, EntryBefore, Prio, Color, SpeedCmp, BrakeCmp, WaitCmp, LimitCmp]


@dataclass(frozen=True)
class Rule:
    name: str
    params: tuple[tuple[str, str], ...]
    pre: tuple[Atom, ...]
    post: Atom

    @property
    def ego(self) -> str:
        return self.params[0][0]

    def sort_of(self, var: str) -> str:
        return dict(self.params)[var]


@dataclass(frozen=True)
class LimitRule:
    name: str
    params: tuple[tuple[str, str], ...]
    pre: tuple[Atom, ...]
    bound: LimitCmp

    @property
    def ego(self) -> str:
        return self.params[0][0]

    @property
    def post(self) -> LimitCmp:
        return self.bound


def atom_vars(atom: Atom) -> tuple[str, ...]:
    """Variables mentioned by an atom, in order of appearance, without duplicates."""
    out: list[str] = []

    def add(*names: str) -> None:
        for n in names:
            if n not in out:
                out.append(n)

    def term(t: Term) -> None:
        add(t.name if isinstance(t, Var) else t.edge)

    def expr(e: Expr | None) -> None:
        if isinstance(e, SpeedLimit):
            add(e.edge)
        elif isinstance(e, BrakeOf):
            add(e.vehicle)
            expr(e.arg)

    match atom:
        case At(c, x) | EdgeMeets(c, x) | Meets(c, x):
            add(c, x)
        case Junction(a, b) | EntryBefore(a, b) | WaitCmp(a, _, b):
            add(a, b)
        case Prio(u, a, b):
            add(u, a, b)
        case Color(light, _):
            add(light)
        case SpeedCmp(c, _, rhs):
            add(c)
            expr(rhs)
        case BrakeCmp(c, _, target, offset) | LimitCmp(c, _, target, offset):
            add(c)
            term(target)
            expr(offset)
    return tuple(out)
