"""LTL fragment over finite state-action trajectories.

Syntax (precedence high to low)::

    ( ) > forall = exists = forn > not > and > or > implies > then

Atoms are ``name(arg, ...)``; an atom whose name is a known action and is
not spelled in lower case is an action proposition (``OPEN(box.1)``),
everything else is a state proposition (``open(box.1)``). ``forn`` takes
its count as ``forn(2) x. (...)`` or ``forn2 x. (...)``.

State formulas (no ``then``) are "eventually" formulas over a step range.
``f1 then ... then fm`` holds on a range iff the range splits into m
consecutive non-empty segments with segment i satisfying ``fi``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

from .world import (
    GroundAction,
    ObjectRef,
    Proposition,
    UnknownObject,
    Universe,
    Vocabulary,
    WorldState,
    action_key,
)


class LtlError(Exception):
    pass


class ParseError(LtlError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = frozenset(expected)
        exp = f"; expected one of {sorted(self.expected)}" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{exp}")


class ValidationError(LtlError):
    pass


class VocabularyError(LtlError):
    pass


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class StateProp:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class ActionProp:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class ForN:
    var: str
    n: int
    body: "Formula"


@dataclass(frozen=True)
class Then:
    children: tuple["Formula", ...]


Formula = Union[StateProp, ActionProp, Not, And, Or, Implies, Forall, Exists, ForN, Then]
Atom = (StateProp, ActionProp)
Quantifier = (Forall, Exists, ForN)


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, Atom):
        return ()
    if isinstance(f, Not):
        return (f.child,)
    if isinstance(f, Implies):
        return (f.lhs, f.rhs)
    if isinstance(f, Quantifier):
        return (f.body,)
    return f.children


def walk(f: Formula) -> Iterator[Formula]:
    yield f
    for c in children(f):
        yield from walk(c)


def has_then(f: Formula) -> bool:
    return any(isinstance(g, Then) for g in walk(f))


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<objid>[A-Za-z_]\w*\.[0-9]+)
  | (?P<name>[A-Za-z_]\w*)
  | (?P<num>[0-9]+)
  | (?P<punct>[(),.])
    """,
    re.VERBOSE,
)
_KEYWORDS = {"then", "or", "and", "not", "forall", "exists", "forn", "implies"}
_FORN_SUFFIX = re.compile(r"forn([0-9]+)", re.IGNORECASE)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int

    @property
    def kw(self) -> str | None:
        if self.kind != "name":
            return None
        low = self.text.lower()
        if low in _KEYWORDS:
            return low
        if _FORN_SUFFIX.fullmatch(self.text):
            return "forn"
        return None


def _tokenize(text: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, actions: frozenset[str]):
        self.toks = _tokenize(text)
        self.i = 0
        self.actions = actions

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, expected: Iterable[str]):
        t = self.tok
        what = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.offset, expected)

    def punct(self, ch: str):
        if self.tok.kind == "punct" and self.tok.text == ch:
            self.i += 1
            return
        self.fail([ch])

    def at_kw(self, kw: str) -> bool:
        return self.tok.kw == kw

    def parse(self) -> Formula:
        f = self.then_stmt()
        if self.tok.kind != "eof":
            self.fail(["then", "implies", "or", "and", "<end>"])
        return f

    def then_stmt(self) -> Formula:
        parts = [self.imp_stmt()]
        while self.at_kw("then"):
            self.i += 1
            parts.append(self.imp_stmt())
        return parts[0] if len(parts) == 1 else Then(tuple(parts))

    def imp_stmt(self) -> Formula:
        lhs = self.or_stmt()
        if self.at_kw("implies"):
            self.i += 1
            return Implies(lhs, self.imp_stmt())
        return lhs

    def or_stmt(self) -> Formula:
        parts = [self.and_stmt()]
        while self.at_kw("or"):
            self.i += 1
            parts.append(self.and_stmt())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_stmt(self) -> Formula:
        parts = [self.primitive()]
        while self.at_kw("and"):
            self.i += 1
            parts.append(self.primitive())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def primitive(self) -> Formula:
        t = self.tok
        kw = t.kw
        if kw == "not":
            self.i += 1
            return Not(self.primitive())
        if kw in ("forall", "exists", "forn"):
            return self.quantified(kw)
        if t.kind == "punct" and t.text == "(":
            self.i += 1
            f = self.then_stmt()
            self.punct(")")
            return f
        if t.kind == "name" and kw is None:
            return self.atom()
        self.fail(["not", "forall", "exists", "forn", "(", "<predicate>"])

    def quantified(self, kw: str) -> Formula:
        head = self.tok
        self.i += 1
        n = None
        if kw == "forn":
            m = _FORN_SUFFIX.fullmatch(head.text)
            if m:
                n = int(m.group(1))
            else:
                self.punct("(")
                if self.tok.kind != "num":
                    self.fail(["<count>"])
                n = int(self.tok.text)
                self.i += 1
                self.punct(")")
        if self.tok.kind != "name" or self.tok.kw is not None:
            self.fail(["<variable>"])
        var = self.tok.text
        self.i += 1
        self.punct(".")
        self.punct("(")
        body = self.then_stmt()
        self.punct(")")
        if kw == "forall":
            return Forall(var, body)
        if kw == "exists":
            return Exists(var, body)
        return ForN(var, n, body)

    def atom(self) -> Formula:
        raw = self.tok.text
        name = raw.lower()
        self.i += 1
        self.punct("(")
        args: list[str] = []
        if not (self.tok.kind == "punct" and self.tok.text == ")"):
            while True:
                if self.tok.kind not in ("name", "objid") or self.tok.kw is not None:
                    self.fail(["<object>", "<variable>"])
                args.append(self.tok.text)
                self.i += 1
                if self.tok.kind == "punct" and self.tok.text == ",":
                    self.i += 1
                    continue
                break
        self.punct(")")
        # "open" is both a state and an action: lower-case spelling means the state
        is_action = action_key(name) in self.actions and not raw.islower()
        return (ActionProp if is_action else StateProp)(name, tuple(args))


def parse(text: str, actions: Iterable[str] = ()) -> Formula:
    """Parse the text dialect. ``actions`` names the action vocabulary."""
    return _Parser(text, frozenset(action_key(a) for a in actions)).parse()


# -- rendering ---------------------------------------------------------------


def _level(f: Formula) -> int:
    if isinstance(f, Then):
        return 0
    if isinstance(f, Implies):
        return 1
    if isinstance(f, Or):
        return 2
    if isinstance(f, And):
        return 3
    return 4


def _wrap(f: Formula, min_level: int) -> str:
    s = render(f)
    return f"({s})" if _level(f) < min_level else s


def render(f: Formula) -> str:
    """Canonical text; ``parse(render(f)) == f``."""
    if isinstance(f, StateProp):
        return f"{f.name.lower()}({', '.join(f.args)})"
    if isinstance(f, ActionProp):
        return f"{f.name.upper()}({', '.join(f.args)})"
    if isinstance(f, Not):
        return "not " + _wrap(f.child, 4)
    if isinstance(f, And):
        return " and ".join(_wrap(c, 4) for c in f.children)
    if isinstance(f, Or):
        return " or ".join(_wrap(c, 3) for c in f.children)
    if isinstance(f, Implies):
        return f"{_wrap(f.lhs, 2)} implies {_wrap(f.rhs, 1)}"
    if isinstance(f, Then):
        return " then ".join(_wrap(c, 1) for c in f.children)
    if isinstance(f, Forall):
        return f"forall {f.var}. ({render(f.body)})"
    if isinstance(f, Exists):
        return f"exists {f.var}. ({render(f.body)})"
    if isinstance(f, ForN):
        return f"forn({f.n}) {f.var}. ({render(f.body)})"
    raise TypeError(f"not a formula: {f!r}")


# -- trajectories ------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """States s_0..s_n and actions a_1..a_n; step i pairs s_i with a_i (a_0 = None)."""

    states: tuple[WorldState, ...]
    actions: tuple[GroundAction, ...] = ()

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("a trajectory needs exactly one more state than actions")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def universe(self) -> Universe:
        return self.states[0].universe

    @property
    def final(self) -> WorldState:
        return self.states[-1]

    def incoming(self, i: int) -> GroundAction | None:
        return self.actions[i - 1] if i > 0 else None


# -- validation and lint -----------------------------------------------------


@dataclass(frozen=True)
class LintFinding:
    kind: str  # hallucination | arity | not_over_then | forn_across_then
    name: str
    subject: str = ""  # hallucination: predicate | action | object
    expected: int | None = None
    got: int | None = None

    def __str__(self) -> str:
        if self.kind == "hallucination":
            return f"Hallucination({self.subject} {self.name})"
        if self.kind == "arity":
            return f"ArityError({self.name}, {self.expected}, {self.got})"
        return f"{self.kind}({self.name})"


def _resolve_arg(arg: str, env: dict[str, ObjectRef], universe: Universe) -> ObjectRef:
    if arg in env:
        return env[arg]
    return universe.resolve(arg)


def lint(f: Formula, vocab: Vocabulary | None, universe: Universe | None) -> list[LintFinding]:
    """Grammar-level findings; never raises."""
    out: list[LintFinding] = []
    seen: set[LintFinding] = set()

    def add(finding: LintFinding):
        if finding not in seen:
            seen.add(finding)
            out.append(finding)

    def visit(g: Formula, bound: frozenset[str], under_not: bool, in_forn: bool):
        if isinstance(g, Then):
            if under_not:
                add(LintFinding("not_over_then", "then"))
            if in_forn:
                add(LintFinding("forn_across_then", "forn"))
        if isinstance(g, Atom):
            if vocab is not None:
                if isinstance(g, ActionProp):
                    arity = vocab.action_arity(g.name)
                    if arity is None:
                        add(LintFinding("hallucination", g.name, "action"))
                    elif arity != len(g.args):
                        add(LintFinding("arity", g.name, expected=arity, got=len(g.args)))
                else:
                    arity = vocab.predicates.get(g.name)
                    if arity is None and g.name in vocab.properties:
                        arity = 1
                    if arity is None:
                        add(LintFinding("hallucination", g.name, "predicate"))
                    elif arity != len(g.args):
                        add(LintFinding("arity", g.name, expected=arity, got=len(g.args)))
            if universe is not None:
                for a in g.args:
                    if a in bound:
                        continue
                    try:
                        universe.resolve(a)
                    except (UnknownObject, ValueError):
                        add(LintFinding("hallucination", a, "object"))
            return
        if isinstance(g, Quantifier):
            visit(g.body, bound | {g.var}, under_not, in_forn or isinstance(g, ForN))
            return
        for c in children(g):
            visit(c, bound, under_not or isinstance(g, Not), in_forn)

    visit(f, frozenset(), False, False)
    return out


def validate(f: Formula, universe: Universe, vocab: Vocabulary | None = None) -> None:
    """Raise on free variables, unknown arities, or negated ``then``."""

    def visit(g: Formula, bound: frozenset[str], under_not: bool):
        if isinstance(g, Then) and under_not:
            raise ValidationError("negation over a 'then' subformula has no defined semantics")
        if isinstance(g, Atom):
            for a in g.args:
                if a in bound:
                    continue
                try:
                    universe.resolve(a)
                except (UnknownObject, ValueError) as e:
                    raise ValidationError(f"free variable or unknown object {a!r} in {render(g)}") from e
            if vocab is not None:
                if isinstance(g, ActionProp):
                    arity = vocab.action_arity(g.name)
                else:
                    arity = vocab.predicates.get(g.name, 1 if g.name in vocab.properties else None)
                if arity is None:
                    raise VocabularyError(f"unknown name {g.name!r}")
                if arity != len(g.args):
                    raise VocabularyError(f"{g.name} takes {arity} arguments, got {len(g.args)}")
            return
        if isinstance(g, Quantifier):
            visit(g.body, bound | {g.var}, under_not)
            return
        for c in children(g):
            visit(c, bound, under_not or isinstance(g, Not))

    visit(f, frozenset(), False)


# -- evaluation --------------------------------------------------------------


def holds_at(f: Formula, t: Trajectory, i: int, env: dict[str, ObjectRef] | None = None) -> bool:
    """Pointwise truth of a then-free formula at step i."""
    env = env or {}
    u = t.universe
    if isinstance(f, StateProp):
        args = tuple(_resolve_arg(a, env, u) for a in f.args)
        return t.states[i].holds(Proposition(f.name, args))
    if isinstance(f, ActionProp):
        act = t.incoming(i)
        if act is None or action_key(act.name) != action_key(f.name):
            return False
        if len(act.args) != len(f.args):
            return False
        return all(_resolve_arg(a, env, u) == b for a, b in zip(f.args, act.args))
    if isinstance(f, Not):
        return not holds_at(f.child, t, i, env)
    if isinstance(f, And):
        return all(holds_at(c, t, i, env) for c in f.children)
    if isinstance(f, Or):
        return any(holds_at(c, t, i, env) for c in f.children)
    if isinstance(f, Implies):
        return (not holds_at(f.lhs, t, i, env)) or holds_at(f.rhs, t, i, env)
    if isinstance(f, Forall):
        return all(holds_at(f.body, t, i, {**env, f.var: o}) for o in u.sorted_objects())
    if isinstance(f, Exists):
        return any(holds_at(f.body, t, i, {**env, f.var: o}) for o in u.sorted_objects())
    if isinstance(f, ForN):
        return sum(holds_at(f.body, t, i, {**env, f.var: o}) for o in u.sorted_objects()) == f.n
    raise ValidationError(f"'then' cannot be evaluated at a single step: {render(f)}")


class _Evaluator:
    """Memoized evaluation over (subformula, bindings, step range)."""

    def __init__(self, t: Trajectory):
        self.t = t
        self.objects = t.universe.sorted_objects()
        self.memo: dict[tuple, bool] = {}
        self.temporal: dict[int, bool] = {}

    def is_temporal(self, f: Formula) -> bool:
        key = id(f)
        if key not in self.temporal:
            self.temporal[key] = has_then(f)
        return self.temporal[key]

    def range(self, f: Formula, i: int, j: int, env: dict[str, ObjectRef]) -> bool:
        key = (id(f), tuple(sorted(env.items())), i, j)
        hit = self.memo.get(key)
        if hit is None:
            hit = self._range(f, i, j, env)
            self.memo[key] = hit
        return hit

    def point(self, f: Formula, k: int, env: dict[str, ObjectRef]) -> bool:
        key = (id(f), tuple(sorted(env.items())), k, None)
        hit = self.memo.get(key)
        if hit is None:
            hit = holds_at(f, self.t, k, env)
            self.memo[key] = hit
        return hit

    def _range(self, f: Formula, i: int, j: int, env: dict[str, ObjectRef]) -> bool:
        if not self.is_temporal(f):
            return any(self.point(f, k, env) for k in range(i, j + 1))
        if isinstance(f, Then):
            starts = {i}
            last = len(f.children) - 1
            for idx, c in enumerate(f.children):
                if idx == last:
                    return any(self.range(c, p, j, env) for p in sorted(starts))
                nxt = set()
                for p in sorted(starts):
                    # leave at least one step per remaining segment
                    for q in range(p, j - (last - idx) + 1):
                        if self.range(c, p, q, env):
                            nxt.add(q + 1)
                if not nxt:
                    return False
                starts = nxt
        if isinstance(f, And):
            return all(self.range(c, i, j, env) for c in f.children)
        if isinstance(f, Or):
            return any(self.range(c, i, j, env) for c in f.children)
        if isinstance(f, Implies):
            return (not self.range(f.lhs, i, j, env)) or self.range(f.rhs, i, j, env)
        if isinstance(f, Forall):
            return all(self.range(f.body, i, j, {**env, f.var: o}) for o in self.objects)
        if isinstance(f, Exists):
            return any(self.range(f.body, i, j, {**env, f.var: o}) for o in self.objects)
        if isinstance(f, ForN):
            return sum(self.range(f.body, i, j, {**env, f.var: o}) for o in self.objects) == f.n
        raise ValidationError(f"negation over 'then': {render(f)}")


def evaluate(f: Formula, t: Trajectory, vocab: Vocabulary | None = None) -> bool:
    validate(f, t.universe, vocab)
    return _Evaluator(t).range(f, 0, len(t) - 1, {})


def flatten_then(f: Formula) -> tuple[Formula, ...]:
    """Top-level segments of a ``then`` chain (one element if there is none)."""
    return f.children if isinstance(f, Then) else (f,)


def segmentations(n_steps: int, m: int) -> Iterator[tuple[tuple[int, int], ...]]:
    """All splits of steps 0..n_steps-1 into m consecutive non-empty ranges."""
    for cuts in itertools.combinations(range(1, n_steps), m - 1):
        bounds = (0, *cuts, n_steps)
        yield tuple((bounds[k], bounds[k + 1] - 1) for k in range(m))


def then_of(parts: Sequence[Formula]) -> Formula:
    return parts[0] if len(parts) == 1 else Then(tuple(parts))
