"""Traffic rules: syntax, limit-position rewrite and evaluation."""

from functools import lru_cache
from importlib import resources

from .ast import (
    At,
    BrakeCmp,
    BrakeOf,
    Color,
    EdgeMeets,
    EntryBefore,
    Junction,
    LimitCmp,
    LimitRule,
    Meets,
    Num,
    Post,
    Pre,
    Prio,
    Rule,
    SpeedCmp,
    SpeedLimit,
    Var,
    WaitCmp,
)
from .evaluate import (
    R_MATCH,
    MatchedBound,
    Matcher,
    RuleApplicationError,
    World,
    bound_of,
    compare,
    eval_atom,
    match_bounds,
)
from .syntax import (
    FragmentError,
    RuleError,
    RuleSortError,
    RuleSyntaxError,
    parse_rules,
    print_atom,
    print_rule,
    print_rules,
)
from .transform import is_speed_lower_closed, speed_lower_closure, to_limit_form


def builtin_text() -> str:
    return resources.files(__package__).joinpath("builtin.dsl").read_text(encoding="utf-8")


@lru_cache(maxsize=1)
def _builtin() -> tuple[Rule, ...]:
    return tuple(parse_rules(builtin_text()))


def builtin_rules() -> list[Rule]:
    return list(_builtin())


__all__ = [
    "R_MATCH",
    "At",
    "BrakeCmp",
    "BrakeOf",
    "Color",
    "EdgeMeets",
    "EntryBefore",
    "FragmentError",
    "Junction",
    "LimitCmp",
    "LimitRule",
    "MatchedBound",
    "Matcher",
    "Meets",
    "Num",
    "Post",
    "Pre",
    "Prio",
    "Rule",
    "RuleApplicationError",
    "RuleError",
    "RuleSortError",
    "RuleSyntaxError",
    "SpeedCmp",
    "SpeedLimit",
    "Var",
    "WaitCmp",
    "World",
    "bound_of",
    "builtin_rules",
    "builtin_text",
    "compare",
    "eval_atom",
    "is_speed_lower_closed",
    "match_bounds",
    "parse_rules",
    "print_atom",
    "print_rule",
    "print_rules",
    "speed_lower_closure",
    "to_limit_form",
]
