"""Guard predicate language.

Guards are boolean expressions over runtime signals, real-signal
thresholds, marking tests, and a ``held_for`` debounce operator that is
true only when its body has held continuously for a given duration.

Expression grammar (infix, case-sensitive)::

    expr    := term ("or" term)*
    term    := factor ("and" factor)*
    factor  := "not" factor | atom
    atom    := "true" | "false"
             | NAME                      boolean signal or named predicate
             | NAME ">=" NUMBER          real-signal threshold
             | NAME "<=" NUMBER
             | "marked" "(" PLACE ["," COUNT] ")"
             | "held_for" "(" expr "," DURATION ")"
             | "(" expr ")"

``held_for(e, d)`` at time ``t`` is true iff ``t >= d`` and ``e`` holds at
every instant of ``[t - d, t]``. With piecewise-constant signals this is
decided exactly by checking the window start plus every change-point
inside the window. Nested ``held_for`` is rejected at validation: it
would make guard flip times depend on non-recorded instants.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

from .signals import SignalState, UndeclaredSignal

BOOL_OPS = ("and", "or", "not")


class GuardError(ValueError):
    """Malformed guard expression or unresolvable atom."""


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class GuardExpr:
    def __and__(self, other: "GuardExpr") -> "GuardExpr":
        return And((self, other))

    def __or__(self, other: "GuardExpr") -> "GuardExpr":
        return Or((self, other))

    def __invert__(self) -> "GuardExpr":
        return Not(self)


@dataclass(frozen=True)
class Const(GuardExpr):
    value: bool


@dataclass(frozen=True)
class Sig(GuardExpr):
    name: str


@dataclass(frozen=True)
class Cmp(GuardExpr):
    name: str
    op: str  # ">=" or "<="
    threshold: float


@dataclass(frozen=True)
class Marked(GuardExpr):
    place: str
    count: int = 1


@dataclass(frozen=True)
class Not(GuardExpr):
    child: GuardExpr


@dataclass(frozen=True)
class And(GuardExpr):
    children: tuple[GuardExpr, ...]


@dataclass(frozen=True)
class Or(GuardExpr):
    children: tuple[GuardExpr, ...]


@dataclass(frozen=True)
class HeldFor(GuardExpr):
    child: GuardExpr
    duration: int

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise GuardError("held_for duration must be >= 0")


TRUE = Const(True)
FALSE = Const(False)


def walk(expr: GuardExpr) -> Iterator[GuardExpr]:
    yield expr
    if isinstance(expr, Not):
        yield from walk(expr.child)
    elif isinstance(expr, (And, Or)):
        for child in expr.children:
            yield from walk(child)
    elif isinstance(expr, HeldFor):
        yield from walk(expr.child)


def signal_names(expr: GuardExpr) -> set[str]:
    return {n.name for n in walk(expr) if isinstance(n, (Sig, Cmp))}


def place_names(expr: GuardExpr) -> set[str]:
    return {n.place for n in walk(expr) if isinstance(n, Marked)}


def held_terms(expr: GuardExpr) -> list[HeldFor]:
    return [n for n in walk(expr) if isinstance(n, HeldFor)]


def check_no_nested_held(expr: GuardExpr) -> None:
    for term in held_terms(expr):
        if any(isinstance(n, HeldFor) for n in walk(term.child)):
            raise GuardError("nested held_for is not supported")


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d+|\.\d+|\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>>=|<=|\(|\)|,))"
)


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise GuardError(f"bad character in guard at {text[pos:]!r}")
        tokens.append(match.group(match.lastgroup))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: str | None = None) -> str:
        token = self.peek()
        if token is None:
            raise GuardError("unexpected end of guard expression")
        if expected is not None and token != expected:
            raise GuardError(f"expected {expected!r}, found {token!r}")
        self.pos += 1
        return token

    def parse(self) -> GuardExpr:
        expr = self.parse_or()
        if self.peek() is not None:
            raise GuardError(f"trailing tokens in guard: {self.tokens[self.pos:]}")
        return expr

    def parse_or(self) -> GuardExpr:
        terms = [self.parse_and()]
        while self.peek() == "or":
            self.take()
            terms.append(self.parse_and())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def parse_and(self) -> GuardExpr:
        factors = [self.parse_not()]
        while self.peek() == "and":
            self.take()
            factors.append(self.parse_not())
        return factors[0] if len(factors) == 1 else And(tuple(factors))

    def parse_not(self) -> GuardExpr:
        if self.peek() == "not":
            self.take()
            return Not(self.parse_not())
        return self.parse_atom()

    def parse_atom(self) -> GuardExpr:
        token = self.take()
        if token == "(":
            inner = self.parse_or()
            self.take(")")
            return inner
        if token == "true":
            return TRUE
        if token == "false":
            return FALSE
        if token == "marked":
            self.take("(")
            place = self.take()
            count = 1
            if self.peek() == ",":
                self.take()
                count = int(float(self.take()))
            self.take(")")
            return Marked(place, count)
        if token == "held_for":
            self.take("(")
            inner = self.parse_or()
            self.take(",")
            duration = int(float(self.take()))
            self.take(")")
            return HeldFor(inner, duration)
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.]*", token):
            if self.peek() in (">=", "<="):
                op = self.take()
                threshold = float(self.take())
                return Cmp(token, op, threshold)
            return Sig(token)
        raise GuardError(f"unexpected token {token!r} in guard")


def parse_guard(text: str) -> GuardExpr:
    """Parse a guard expression string into an AST."""
    text = text.strip()
    if not text:
        return TRUE
    return _Parser(_tokenize(text)).parse()


def guard_to_string(expr: GuardExpr) -> str:
    if isinstance(expr, Const):
        return "true" if expr.value else "false"
    if isinstance(expr, Sig):
        return expr.name
    if isinstance(expr, Cmp):
        return f"{expr.name} {expr.op} {expr.threshold:g}"
    if isinstance(expr, Marked):
        return f"marked({expr.place}, {expr.count})"
    if isinstance(expr, Not):
        return f"not {_wrap(expr.child)}"
    if isinstance(expr, And):
        return " and ".join(_wrap(c) for c in expr.children)
    if isinstance(expr, Or):
        return " or ".join(_wrap(c, in_or=True) for c in expr.children)
    if isinstance(expr, HeldFor):
        return f"held_for({guard_to_string(expr.child)}, {expr.duration})"
    raise GuardError(f"unknown expression node {expr!r}")


def _wrap(expr: GuardExpr, in_or: bool = False) -> str:
    text = guard_to_string(expr)
    if isinstance(expr, Or) or (isinstance(expr, And) and not in_or):
        return f"({text})"
    return text


# --- evaluation ------------------------------------------------------------


class EvalContext:
    """What a guard may read: signals at a given instant, the current
    marking, and (for held_for) past change-points and marking history."""

    def __init__(
        self,
        sigma: SignalState,
        marking: Mapping[str, int],
        now: int,
        marking_history: list[tuple[int, Mapping[str, int]]] | None = None,
    ):
        self.sigma = sigma
        self.marking = marking
        self.now = now
        self.marking_history = marking_history

    def marking_at(self, time: int) -> Mapping[str, int]:
        if time >= self.now or not self.marking_history:
            return self.marking
        result = self.marking_history[0][1]
        for t, m in self.marking_history:
            if t > time:
                break
            result = m
        return result


def eval_guard(
    expr: GuardExpr,
    sigma: SignalState,
    marking: Mapping[str, int],
    now: int,
    marking_history: list[tuple[int, Mapping[str, int]]] | None = None,
) -> bool:
    """Truth value of ``expr`` at instant ``now``."""
    ctx = EvalContext(sigma, marking, now, marking_history)
    return _eval(expr, ctx, now)


def _eval(expr: GuardExpr, ctx: EvalContext, time: int) -> bool:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Sig):
        return bool(ctx.sigma.value_at(expr.name, time))
    if isinstance(expr, Cmp):
        value = float(ctx.sigma.value_at(expr.name, time))
        return value >= expr.threshold if expr.op == ">=" else value <= expr.threshold
    if isinstance(expr, Marked):
        marking = ctx.marking if time >= ctx.now else ctx.marking_at(time)
        if expr.place not in marking:
            raise UndeclaredSignal(f"marking atom references unknown place {expr.place!r}")
        return marking[expr.place] >= expr.count
    if isinstance(expr, Not):
        return not _eval(expr.child, ctx, time)
    if isinstance(expr, And):
        return all(_eval(c, ctx, time) for c in expr.children)
    if isinstance(expr, Or):
        return any(_eval(c, ctx, time) for c in expr.children)
    if isinstance(expr, HeldFor):
        return _eval_held(expr, ctx, time)
    raise GuardError(f"unknown expression node {expr!r}")


def _held_change_points(expr: HeldFor, ctx: EvalContext, start: int, end: int) -> list[int]:
    points = set(ctx.sigma.change_points(signal_names(expr.child), start, end))
    if place_names(expr.child) and ctx.marking_history:
        for t, _ in ctx.marking_history:
            if start < t <= end:
                points.add(t)
    return sorted(points)


def _eval_held(expr: HeldFor, ctx: EvalContext, time: int) -> bool:
    # An incomplete window cannot witness "held continuously".
    if time < expr.duration:
        return False
    start = time - expr.duration
    if not _eval(expr.child, ctx, start):
        return False
    for point in _held_change_points(expr, ctx, start, time):
        if not _eval(expr.child, ctx, point):
            return False
    return True


def held_for(
    expr: GuardExpr,
    duration: int,
    sigma: SignalState,
    marking_history: list[tuple[int, Mapping[str, int]]] | None,
    now: int,
    marking: Mapping[str, int] | None = None,
) -> bool:
    """Standalone held-for query: ``expr`` held over ``[now - duration, now]``."""
    current = marking if marking is not None else (marking_history[-1][1] if marking_history else {})
    return eval_guard(HeldFor(expr, duration), sigma, current, now, marking_history)


def next_held_flip(expr: GuardExpr, ctx: EvalContext) -> int | None:
    """Earliest time > now at which a held_for subterm of ``expr`` can flip
    true by pure time passage (its body already true and the window still
    filling). Atom changes are events and are handled elsewhere; bodies
    currently false cannot flip without one.
    """
    candidates: list[int] = []
    for term in held_terms(expr):
        if not _eval(term.child, ctx, ctx.now):
            continue
        if _eval_held(term, ctx, ctx.now):
            continue  # already true; flips back only on an atom change
        start = _true_run_start(term, ctx)
        flip = max(start + term.duration, term.duration)
        if flip > ctx.now:
            candidates.append(flip)
    return min(candidates) if candidates else None


def _true_run_start(term: HeldFor, ctx: EvalContext) -> int:
    """Start of the contiguous interval over which the body has held.

    The body is piecewise constant, so the run start is the earliest
    change-point from which every later change-point up to now evaluates
    true. Assumes the body is true at now.
    """
    points = [0] + _held_change_points(term, ctx, 0, ctx.now)
    start = ctx.now
    for point in reversed(points):
        if _eval(term.child, ctx, point):
            start = point
        else:
            break
    return start


# --- named predicate library -----------------------------------------------


class PredicateLibrary:
    """Named derived predicates, expanded into guards by substitution.

    Expansion replaces any ``Sig(name)`` whose name is a library entry with
    that entry's definition (recursively). Definitions may not be cyclic.
    """

    def __init__(self, definitions: dict[str, GuardExpr] | None = None):
        self.definitions: dict[str, GuardExpr] = dict(definitions or {})

    def define(self, name: str, expr: GuardExpr | str) -> None:
        if isinstance(expr, str):
            expr = parse_guard(expr)
        self.definitions[name] = expr

    def __contains__(self, name: str) -> bool:
        return name in self.definitions

    def expand(self, expr: GuardExpr | str, _seen: frozenset[str] = frozenset()) -> GuardExpr:
        if isinstance(expr, str):
            expr = parse_guard(expr)
        if isinstance(expr, Sig) and expr.name in self.definitions:
            if expr.name in _seen:
                raise GuardError(f"cyclic predicate definition {expr.name!r}")
            return self.expand(self.definitions[expr.name], _seen | {expr.name})
        if isinstance(expr, Not):
            return Not(self.expand(expr.child, _seen))
        if isinstance(expr, And):
            return And(tuple(self.expand(c, _seen) for c in expr.children))
        if isinstance(expr, Or):
            return Or(tuple(self.expand(c, _seen) for c in expr.children))
        if isinstance(expr, HeldFor):
            return HeldFor(self.expand(expr.child, _seen), expr.duration)
        return expr


def rename_atoms(expr: GuardExpr, signal_map: Mapping[str, str], place_map: Mapping[str, str] | None = None) -> GuardExpr:
    """Rewrite signal and place names (used for per-agent namespacing)."""
    place_map = place_map or {}
    if isinstance(expr, Sig):
        return Sig(signal_map.get(expr.name, expr.name))
    if isinstance(expr, Cmp):
        return Cmp(signal_map.get(expr.name, expr.name), expr.op, expr.threshold)
    if isinstance(expr, Marked):
        return Marked(place_map.get(expr.place, expr.place), expr.count)
    if isinstance(expr, Not):
        return Not(rename_atoms(expr.child, signal_map, place_map))
    if isinstance(expr, And):
        return And(tuple(rename_atoms(c, signal_map, place_map) for c in expr.children))
    if isinstance(expr, Or):
        return Or(tuple(rename_atoms(c, signal_map, place_map) for c in expr.children))
    if isinstance(expr, HeldFor):
        return HeldFor(rename_atoms(expr.child, signal_map, place_map), expr.duration)
    return expr


def atoms_of(expr: GuardExpr) -> list[GuardExpr]:
    return [n for n in walk(expr) if isinstance(n, (Sig, Cmp, Marked, HeldFor))]


def eval_with_assignment(expr: GuardExpr, assignment: Callable[[GuardExpr], bool]) -> bool:
    """Evaluate treating every atom (including held_for terms) as opaque,
    with truth supplied by ``assignment``. Used for static satisfiability
    probes over a guard's own atoms."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, (Sig, Cmp, Marked, HeldFor)):
        return assignment(expr)
    if isinstance(expr, Not):
        return not eval_with_assignment(expr.child, assignment)
    if isinstance(expr, And):
        return all(eval_with_assignment(c, assignment) for c in expr.children)
    if isinstance(expr, Or):
        return any(eval_with_assignment(c, assignment) for c in expr.children)
    raise GuardError(f"unknown expression node {expr!r}")
