from __future__ import annotations

from collections.abc import Sequence

from .ast import (
    LOWER_OPS,
    Atom,
    BrakeCmp,
    BrakeOf,
    Expr,
    LimitCmp,
    LimitRule,
    Num,
    Rule,
    SpeedCmp,
    Var,
)


def _fold(e: Expr | None) -> Expr | None:
    """Drop offsets that are identically zero; ``B(0)`` is zero."""
    if isinstance(e, BrakeOf):
        arg = _fold(e.arg)
        if arg is None:
            return None
        return BrakeOf(e.vehicle, arg)
    if isinstance(e, Num) and e.value == 0:
        return None
    return e


def to_limit_atom(atom: Atom) -> Atom:
    if isinstance(atom, BrakeCmp):
        return LimitCmp(atom.c, atom.op, atom.target, _fold(atom.offset))
    if isinstance(atom, SpeedCmp):
        return LimitCmp(atom.c, atom.op, Var(atom.c), _fold(BrakeOf(atom.c, atom.rhs)))
    return atom


def to_limit_form(rule: Rule) -> LimitRule:
    post = to_limit_atom(rule.post)
    assert isinstance(post, LimitCmp)
    if post.op == "=":
        post = LimitCmp(post.c, "<=", post.base, post.offset)
    return LimitRule(rule.name, rule.params, tuple(to_limit_atom(a) for a in rule.pre), post)


def speed_lower_closure(pre: Sequence[Atom]) -> tuple[Atom, ...]:
    return tuple(a for a in pre if not (isinstance(a, (SpeedCmp, BrakeCmp)) and a.op in LOWER_OPS))


def is_speed_lower_closed(rule: Rule) -> bool:
    return speed_lower_closure(rule.pre) == tuple(rule.pre) and speed_lower_closure((rule.post,)) == (rule.post,)
