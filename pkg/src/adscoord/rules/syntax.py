"""Text form of rules: tokenizer, recursive-descent parser and printer."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import (
    SORTS,
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
    Post,
    Pre,
    Prio,
    Rule,
    SpeedCmp,
    SpeedLimit,
    Term,
    Var,
    WaitCmp,
)


class RuleError(ValueError):
    pass


class RuleSyntaxError(RuleError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class RuleSortError(RuleError):
    pass


class FragmentError(RuleError):
    pass


_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>#[^\n]*)"
    r"|(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)"
    r"|(?P<op><=|>=|<|>|=)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[(),:+])"
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Tok(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: Tok | None = None) -> RuleSyntaxError:
        t = tok or self.tok
        found = t.text or "end of input"
        return RuleSyntaxError(f"{message}, found {found!r}", t.line, t.col)

    def take(self, kind: str, text: str | None = None) -> Tok:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            raise self.error(f"expected {text or kind}")
        self.i += 1
        return t

    def accept(self, kind: str, text: str | None = None) -> Tok | None:
        t = self.tok
        if t.kind == kind and (text is None or t.text == text):
            self.i += 1
            return t
        return None

    def name(self) -> str:
        return self.take("name").text

    def args(self, n: int) -> list[str]:
        self.take("punct", "(")
        out = [self.name()]
        for _ in range(n - 1):
            self.take("punct", ",")
            out.append(self.name())
        self.take("punct", ")")
        return out

    def op(self) -> str:
        return self.take("op").text

    # rules ---------------------------------------------------------------

    def rules(self) -> list[Rule | LimitRule]:
        out = []
        while self.tok.kind != "eof":
            out.append(self.rule())
        return out

    def rule(self) -> Rule | LimitRule:
        head = self.take("name", "rule")
        name = self.name()
        self.take("punct", ":")
        self.take("name", "forall")
        params = [self.decl()]
        while self.accept("punct", ","):
            params.append(self.decl())
        pre: list[tuple[Atom, Tok]] = []
        if self.accept("name", "when"):
            pre.append(self.atom())
            while self.accept("name", "and"):
                pre.append(self.atom())
        self.take("name", "then")
        post = self.atom()
        return _check_rule(name, tuple(params), pre, post, head)

    def decl(self) -> tuple[str, str]:
        v = self.name()
        self.take("punct", ":")
        t = self.tok
        sort = self.name()
        if sort not in SORTS:
            raise self.error(f"unknown sort (expected one of {', '.join(SORTS)})", t)
        return v, sort

    # atoms ---------------------------------------------------------------

    def atom(self) -> tuple[Atom, Tok]:
        t = self.tok
        kw = self.name()
        if kw in ("at", "edgemeets", "meets"):
            c, x = self.args(2)
            return {"at": At, "edgemeets": EdgeMeets, "meets": Meets}[kw](c, x), t
        if kw == "junction":
            return Junction(*self.args(2)), t
        if kw == "entry_before":
            return EntryBefore(*self.args(2)), t
        if kw == "prio":
            return Prio(*self.args(3)), t
        if kw == "color":
            (light,) = self.args(1)
            self.take("op", "=")
            vt = self.tok
            value = self.name()
            if value not in ("red", "green"):
                raise self.error("expected red or green", vt)
            return Color(light, value), t
        if kw == "speed":
            (c,) = self.args(1)
            return SpeedCmp(c, self.op(), self.expr()), t
        if kw == "brake":
            (c,) = self.args(1)
            op = self.op()
            self.take("name", "dist")
            self.take("punct", "(")
            ct = self.tok
            c2 = self.name()
            if c2 != c:
                raise self.error(f"distance must be measured from {c}", ct)
            self.take("punct", ",")
            target = self.term()
            self.take("punct", ")")
            offset = self.expr() if self.accept("punct", "+") else None
            return BrakeCmp(c, op, target, offset), t
        if kw == "wait":
            (a,) = self.args(1)
            op = self.op()
            self.take("name", "wait")
            (b,) = self.args(1)
            return WaitCmp(a, op, b), t
        if kw == "limit":
            (c,) = self.args(1)
            op = self.op()
            base = self.term()
            offset = self.expr() if self.accept("punct", "+") else None
            return LimitCmp(c, op, base, offset), t
        raise self.error("unknown atom", t)

    def term(self) -> Term:
        n = self.name()
        if n in ("pos", "pre", "post") and self.tok.text == "(":
            (arg,) = self.args(1)
            return {"pos": Var, "pre": Pre, "post": Post}[n](arg)
        return Var(n)

    def expr(self) -> Expr:
        t = self.accept("num")
        if t:
            return Num(float(t.text))
        kw = self.name()
        if kw == "speedlimit":
            return SpeedLimit(*self.args(1))
        if kw == "brake_of":
            self.take("punct", "(")
            c = self.name()
            self.take("punct", ",")
            arg = self.expr()
            self.take("punct", ")")
            return BrakeOf(c, arg)
        raise self.error("expected a number, speedlimit(e) or brake_of(c, ...)")


# --- sort and fragment checks ---------------------------------------------

def _check_rule(name, params, pre, post, head) -> Rule | LimitRule:
    sorts: dict[str, str] = {}
    for v, s in params:
        if v in sorts:
            raise RuleSortError(f"rule {name}: variable {v} declared twice")
        sorts[v] = s
    ego = params[0][0]
    if sorts[ego] != "vehicle":
        raise RuleSortError(f"rule {name}: the first variable {ego} must be a vehicle")
    for atom, tok in pre + [post]:
        _check_sorts(name, atom, sorts, tok)
    post_atom, ptok = post
    where = f"rule {name} ({ptok.line}:{ptok.col})"
    text = print_atom(post_atom)
    if isinstance(post_atom, LimitCmp):
        if post_atom.c != ego or post_atom.op != "<=":
            raise FragmentError(f"{where}: postcondition {text} must bound limit({ego}) from above")
        if any(isinstance(a, (SpeedCmp, BrakeCmp)) for a, _ in pre):
            raise FragmentError(f"{where}: limit-form rules cannot mention speeds")
        return LimitRule(name, params, tuple(a for a, _ in pre), post_atom)
    if isinstance(post_atom, SpeedCmp):
        ok = post_atom.c == ego and (post_atom.op == "<=" or (post_atom.op == "=" and _is_zero(post_atom.rhs)))
    elif isinstance(post_atom, BrakeCmp):
        ok = post_atom.c == ego and post_atom.op == "<="
    else:
        ok = False
    if not ok:
        raise FragmentError(
            f"{where}: postcondition {text} must be speed({ego}) <= t, speed({ego}) = 0 "
            f"or brake({ego}) <= dist({ego}, x) [+ t]"
        )
    return Rule(name, params, tuple(a for a, _ in pre), post_atom)


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 0


def _check_sorts(rule: str, atom: Atom, sorts: dict[str, str], tok: Tok) -> None:
    where = f"rule {rule} ({tok.line}:{tok.col}): {print_atom(atom)}"

    def need(var: str, allowed) -> None:
        if var not in sorts:
            raise RuleSortError(f"{where}: unbound variable {var}")
        if allowed is None:
            return
        allowed = (allowed,) if isinstance(allowed, str) else allowed
        if sorts[var] not in allowed:
            raise RuleSortError(f"{where}: {var} has sort {sorts[var]}, expected {' or '.join(allowed)}")

    def term(t: Term) -> None:
        if isinstance(t, Var):
            need(t.name, None)
        else:
            need(t.edge, "edge")

    def expr(e: Expr | None) -> None:
        if isinstance(e, SpeedLimit):
            need(e.edge, "edge")
        elif isinstance(e, BrakeOf):
            need(e.vehicle, "vehicle")
            expr(e.arg)
        elif isinstance(e, Num) and e.value < 0:
            raise RuleSortError(f"{where}: constants must be non-negative")

    match atom:
        case At(c, x) | EdgeMeets(c, x) | Meets(c, x):
            need(c, "vehicle")
            need(x, None)
        case Junction(p, q) | WaitCmp(p, _, q):
            need(p, "vehicle")
            need(q, "vehicle")
        case EntryBefore(p, q):
            need(p, ("stop_sign", "vertex"))
            need(q, ("stop_sign", "vertex"))
        case Prio(u, p, q):
            need(u, "vertex")
            need(p, "vehicle")
            need(q, "vehicle")
        case Color(light, _):
            need(light, "traffic_light")
        case SpeedCmp(c, _, rhs):
            need(c, "vehicle")
            expr(rhs)
        case BrakeCmp(c, _, target, offset) | LimitCmp(c, _, target, offset):
            need(c, "vehicle")
            term(target)
            expr(offset)


def parse_rules(text: str) -> list[Rule | LimitRule]:
    return _Parser(text).rules()


# --- printing -------------------------------------------------------------

def print_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    return f"{'pre' if isinstance(t, Pre) else 'post'}({t.edge})"


def print_expr(e: Expr) -> str:
    if isinstance(e, Num):
        v = e.value
        return str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
    if isinstance(e, SpeedLimit):
        return f"speedlimit({e.edge})"
    return f"brake_of({e.vehicle}, {print_expr(e.arg)})"


def print_atom(a: Atom) -> str:
    match a:
        case At(c, x):
            return f"at({c}, {x})"
        case EdgeMeets(c, x):
            return f"edgemeets({c}, {x})"
        case Meets(c, x):
            return f"meets({c}, {x})"
        case Junction(p, q):
            return f"junction({p}, {q})"
        case EntryBefore(p, q):
            return f"entry_before({p}, {q})"
        case Prio(u, p, q):
            return f"prio({u}, {p}, {q})"
        case Color(light, value):
            return f"color({light}) = {value}"
        case SpeedCmp(c, op, rhs):
            return f"speed({c}) {op} {print_expr(rhs)}"
        case BrakeCmp(c, op, target, offset):
            tail = f" + {print_expr(offset)}" if offset is not None else ""
            return f"brake({c}) {op} dist({c}, {print_term(target)}){tail}"
        case WaitCmp(p, op, q):
            return f"wait({p}) {op} wait({q})"
        case LimitCmp(c, op, base, offset):
            tail = f" + {print_expr(offset)}" if offset is not None else ""
            base_text = f"pos({base.name})" if isinstance(base, Var) and base.name == c else print_term(base)
            return f"limit({c}) {op} {base_text}{tail}"
    raise TypeError(a)


def print_rule(r: Rule | LimitRule) -> str:
    params = ", ".join(f"{v}:{s}" for v, s in r.params)
    pre = " and ".join(print_atom(a) for a in r.pre)
    when = f" when {pre}" if pre else ""
    return f"rule {r.name}: forall {params}{when} then {print_atom(r.post)}"


def print_rules(rules) -> str:
    return "".join(print_rule(r) + "\n" for r in rules)
