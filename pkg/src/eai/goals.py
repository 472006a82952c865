"""Goal conditions, quantified-goal grounding, satisfaction and F1 scoring."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

from . import ltl
from .domain.pddl import SList, read_sexprs
from .world import (
    GroundAction,
    ObjectRef,
    Proposition,
    Universe,
    Vocabulary,
    WorldState,
    action_key,
)

DEFAULT_OPTION_CAP = 10_000

STATE, RELATION, ACTION = "state", "relation", "action"
CATEGORIES = (STATE, RELATION, ACTION)


class GoalError(Exception):
    pass


# -- condition tree ----------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    predicate: str
    args: tuple[str, ...]
    positive: bool = True


@dataclass(frozen=True)
class GAnd:
    children: tuple["Cond", ...]


@dataclass(frozen=True)
class GOr:
    children: tuple["Cond", ...]


@dataclass(frozen=True)
class GNot:
    child: "Cond"


@dataclass(frozen=True)
class GForall:
    var: str
    type: str
    body: "Cond"


@dataclass(frozen=True)
class GExists:
    var: str
    type: str
    body: "Cond"


@dataclass(frozen=True)
class GForN:
    n: int
    var: str
    type: str
    body: "Cond"


@dataclass(frozen=True)
class GForPairs:
    var1: str
    type1: str
    var2: str
    type2: str
    body: "Cond"


Cond = Union[Lit, GAnd, GOr, GNot, GForall, GExists, GForN, GForPairs]
TRUE = GAnd(())


@dataclass(frozen=True)
class ActionGoal:
    """One required action; ``names`` lists accepted alternatives (``LOOKAT|WATCH``)."""

    names: tuple[str, ...]
    args: tuple[str, ...] | None = None

    def __str__(self) -> str:
        base = "|".join(self.names)
        return base if self.args is None else f"{base}({', '.join(self.args)})"

    def matches(self, action: GroundAction) -> bool:
        if action_key(action.name) not in {action_key(n) for n in self.names}:
            return False
        if self.args is None:
            return True
        return tuple(str(a) for a in action.args) == tuple(_norm_obj(a) for a in self.args)

    @classmethod
    def parse(cls, text: str) -> "ActionGoal":
        m = re.fullmatch(r"\s*([\w|]+)\s*(?:\((.*)\))?\s*", text)
        if not m:
            raise GoalError(f"bad action goal {text!r}")
        names = tuple(n.upper() for n in m.group(1).split("|") if n)
        args = None
        if m.group(2) is not None:
            args = tuple(_norm_obj(a.strip()) for a in m.group(2).split(",") if a.strip())
        return cls(names, args)


def _norm_obj(text: str) -> str:
    try:
        return str(ObjectRef.parse(text))
    except ValueError:
        return text


@dataclass(frozen=True)
class GoalSpec:
    condition: Cond = TRUE
    actions: tuple[ActionGoal, ...] = ()
    source: str = ""

    @property
    def empty(self) -> bool:
        return self.condition == TRUE and not self.actions


# -- literals ----------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Literal:
    """A ground goal literal: ``on(tv.1)`` or ``not stained(fridge.97)``."""

    prop: Proposition = field(compare=False)
    positive: bool = field(default=True, compare=False)
    key: str = field(default="", repr=False)

    def __post_init__(self):
        object.__setattr__(self, "key", str(self))

    def __str__(self) -> str:
        return str(self.prop) if self.positive else f"not {self.prop}"

    def __hash__(self):
        return hash(self.key)

    def __eq__(self, other):
        return isinstance(other, Literal) and self.key == other.key

    @property
    def category(self) -> str:
        return STATE if len(self.prop.args) <= 1 else RELATION

    def holds(self, state: WorldState) -> bool:
        return state.holds(self.prop) == self.positive

    @classmethod
    def parse(cls, text: str) -> "Literal":
        t = text.strip()
        m = re.fullmatch(r"not\s*\(?\s*([A-Za-z_]\w*\s*\([^()]*\))\s*\)?", t, re.IGNORECASE)
        if m and t.lower().startswith(("not ", "not(")) and not t.lower().startswith("not_"):
            return cls(Proposition.parse(m.group(1)), False)
        return cls(Proposition.parse(t), True)


def category_of(item: Union[Literal, "ActionSeq"]) -> str:
    return ACTION if isinstance(item, ActionSeq) else item.category


@dataclass(frozen=True)
class ActionSeq:
    """An ordered action-goal list, scored as one set element."""

    goals: tuple[ActionGoal, ...]

    def __str__(self) -> str:
        return " then ".join(map(str, self.goals))

    def matches(self, other: "ActionSeq") -> bool:
        if len(self.goals) != len(other.goals):
            return False
        for a, b in zip(self.goals, other.goals):
            if not {action_key(n) for n in a.names} & {action_key(n) for n in b.names}:
                return False
            if a.args is not None and b.args is not None and a.args != b.args:
                return False
        return True


@dataclass(frozen=True)
class GoalOption:
    literals: frozenset[Literal]
    actions: tuple[ActionGoal, ...] = ()

    def render(self) -> list[str]:
        return sorted(map(str, self.literals)) + [str(a) for a in self.actions]

    def elements(self) -> list:
        out: list = sorted(self.literals, key=str)
        if self.actions:
            out.append(ActionSeq(self.actions))
        return out


@dataclass
class OptionSet:
    options: list[GoalOption]
    overflow: bool = False
    warnings: list[str] = field(default_factory=list)


# -- ingest: JSON goal records -------------------------------------------------------

VH_RELATIONS = {
    "ON": "ontop",
    "CLOSE": "next_to",
    "INSIDE": "inside",
    "FACING": "facing",
    "HOLDS_RH": "holds_rh",
    "HOLDS_LH": "holds_lh",
    "ONTOP": "ontop",
    "NEXT_TO": "next_to",
}
PREDICATE_ALIASES = {"nextto": "next_to", "toggledon": "toggled_on", "onto": "ontop"}


def _canon_pred(name: str) -> str:
    n = name.lower()
    return PREDICATE_ALIASES.get(n, n)


def spec_from_records(
    goal: Sequence[Mapping],
    actions: Sequence[str] = (),
    id_names: Mapping[int, str] | None = None,
) -> GoalSpec:
    """Goal records: node ``{id, class_name, state}``, edge ``{from_id, relation_type, to_id}``."""
    names: dict[int, str] = dict(id_names or {})
    for rec in goal:
        if "class_name" in rec and "id" in rec:
            names.setdefault(int(rec["id"]), str(rec["class_name"]))

    def obj(i) -> str:
        i = int(i)
        if i not in names:
            raise GoalError(f"object id {i} has no known category")
        return f"{names[i]}.{i}"

    lits: list[Cond] = []
    for rec in goal:
        if "state" in rec:
            state = str(rec["state"])
            positive = not state.upper().startswith("NOT ")
            pred = state.split()[-1].lower()
            lits.append(Lit(pred, (obj(rec["id"]),), positive))
        elif "relation_type" in rec:
            rel = str(rec["relation_type"]).upper()
            pred = VH_RELATIONS.get(rel, rel.lower())
            lits.append(Lit(pred, (obj(rec["from_id"]), obj(rec["to_id"]))))
        else:
            raise GoalError(f"unrecognized goal record {dict(rec)!r}")
    return GoalSpec(GAnd(tuple(lits)), tuple(ActionGoal.parse(a) for a in actions), "records")


def spec_from_literals(items: Iterable[str], actions: Iterable[str] = ()) -> GoalSpec:
    lits = []
    for text in items:
        lit = Literal.parse(text)
        lits.append(Lit(lit.prop.predicate, tuple(map(str, lit.prop.args)), lit.positive))
    return GoalSpec(GAnd(tuple(lits)), tuple(ActionGoal.parse(a) for a in actions), "literals")


# -- ingest: BDDL-like s-expressions ---------------------------------------------------

_SYNSET = re.compile(r"(.+?)\.n\.\d+")


def _type_name(t: str) -> str:
    m = _SYNSET.fullmatch(t)
    return m.group(1) if m else t


def _var_decl(sx) -> tuple[str, str]:
    if not isinstance(sx, list) or len(sx) not in (1, 3) or (len(sx) == 3 and sx[1] != "-"):
        raise GoalError(f"bad variable declaration {sx!r}")
    var = str(sx[0])
    return var, _type_name(str(sx[2])) if len(sx) == 3 else "object"


def _cond_from_sexpr(sx) -> Cond:
    if not isinstance(sx, list) or not sx:
        raise GoalError(f"expected an expression, got {sx!r}")
    head, rest = str(sx[0]), sx[1:]
    if head == "and":
        return GAnd(tuple(_cond_from_sexpr(c) for c in rest))
    if head == "or":
        return GOr(tuple(_cond_from_sexpr(c) for c in rest))
    if head == "not":
        return GNot(_cond_from_sexpr(rest[0]))
    if head == "imply":
        return GOr((GNot(_cond_from_sexpr(rest[0])), _cond_from_sexpr(rest[1])))
    if head in ("forall", "exists"):
        var, typ = _var_decl(rest[0])
        body = _cond_from_sexpr(rest[1])
        return GForall(var, typ, body) if head == "forall" else GExists(var, typ, body)
    if head == "forn":
        count = rest[0][0] if isinstance(rest[0], list) else rest[0]
        var, typ = _var_decl(rest[1])
        return GForN(int(count), var, typ, _cond_from_sexpr(rest[2]))
    if head == "forpairs":
        v1, t1 = _var_decl(rest[0])
        v2, t2 = _var_decl(rest[1])
        return GForPairs(v1, t1, v2, t2, _cond_from_sexpr(rest[2]))
    args = []
    for a in rest:
        if isinstance(a, list):
            raise GoalError(f"nested expression inside {head!r}")
        a = str(a)
        args.append(a if a.startswith("?") else _norm_obj(a))
    return Lit(_canon_pred(head), tuple(args))


def spec_from_bddl(text: str, actions: Sequence[str] = ()) -> GoalSpec:
    """Accepts a bare condition, a ``(:goal ...)`` form, or a whole problem definition."""
    forms = read_sexprs(text)
    goal = _find_goal(forms)
    if goal is None:
        if len(forms) != 1:
            raise GoalError("expected a single goal expression")
        goal = forms[0]
    return GoalSpec(_cond_from_sexpr(goal), tuple(ActionGoal.parse(a) for a in actions), "bddl")


def _find_goal(forms):
    for f in forms:
        if isinstance(f, list) and f:
            if f[0] == ":goal":
                return f[1] if len(f) > 1 else ["and"]
            found = _find_goal(f)
            if found is not None:
                return found
    return None


def bddl_objects(text: str) -> list[tuple[str, str]]:
    """``(:objects a.n.01_1 b.n.01_1 - b.n.01)`` entries as (object text, category)."""
    for f in read_sexprs(text):
        for part in f if isinstance(f, SList) else []:
            if isinstance(part, list) and part and part[0] == ":objects":
                out, pending = [], []
                items = part[1:]
                i = 0
                while i < len(items):
                    if items[i] == "-":
                        out.extend((_norm_obj(p), _type_name(str(items[i + 1]))) for p in pending)
                        pending, i = [], i + 2
                    else:
                        pending.append(str(items[i]))
                        i += 1
                return out
    return []


# -- ingest: LTL dialect ----------------------------------------------------------------


def _action_goal_of(f: ltl.Formula) -> ActionGoal:
    if isinstance(f, ltl.Exists):
        inner = f.body
        if isinstance(inner, ltl.ActionProp):
            return ActionGoal((inner.name.upper(),))
        if isinstance(inner, ltl.Or) and all(isinstance(c, ltl.ActionProp) for c in inner.children):
            return ActionGoal(tuple(c.name.upper() for c in inner.children))
    if isinstance(f, ltl.ActionProp):
        return ActionGoal((f.name.upper(),), tuple(_norm_obj(a) for a in f.args))
    if isinstance(f, ltl.Or) and all(isinstance(c, ltl.ActionProp) for c in f.children):
        args = {c.args for c in f.children}
        shared = next(iter(args)) if len(args) == 1 else None
        return ActionGoal(tuple(c.name.upper() for c in f.children), shared)
    raise GoalError(f"segment is not an action goal: {ltl.render(f)}")


def _cond_from_ltl(f: ltl.Formula) -> Cond:
    if isinstance(f, ltl.StateProp):
        return Lit(_canon_pred(f.name), f.args)
    if isinstance(f, ltl.Not):
        return GNot(_cond_from_ltl(f.child))
    if isinstance(f, ltl.And):
        return GAnd(tuple(_cond_from_ltl(c) for c in f.children))
    if isinstance(f, ltl.Or):
        return GOr(tuple(_cond_from_ltl(c) for c in f.children))
    if isinstance(f, ltl.Implies):
        return GOr((GNot(_cond_from_ltl(f.lhs)), _cond_from_ltl(f.rhs)))
    if isinstance(f, ltl.Forall):
        return GForall(f.var, "object", _cond_from_ltl(f.body))
    if isinstance(f, ltl.Exists):
        return GExists(f.var, "object", _cond_from_ltl(f.body))
    if isinstance(f, ltl.ForN):
        return GForN(f.n, f.var, "object", _cond_from_ltl(f.body))
    raise GoalError(f"unsupported goal form: {ltl.render(f)}")


def spec_from_ltl(text: str, actions: Iterable[str] = ()) -> GoalSpec:
    """Goals of the form ``a1 then ... then (p1 and ... and pk)``."""
    f = ltl.parse(text, actions)
    parts = ltl.flatten_then(f)
    *pre, last = parts
    acts = [_action_goal_of(p) for p in pre]
    if any(isinstance(g, ltl.ActionProp) for g in ltl.walk(last)):
        acts.append(_action_goal_of(last))
        cond: Cond = TRUE
    else:
        cond = _cond_from_ltl(last)
    return GoalSpec(cond, tuple(acts), "ltl")


# -- option expansion --------------------------------------------------------------------


def _nnf(c: Cond, neg: bool = False) -> Cond:
    if isinstance(c, Lit):
        return Lit(c.predicate, c.args, c.positive != neg)
    if isinstance(c, GNot):
        return _nnf(c.child, not neg)
    if isinstance(c, (GAnd, GOr)):
        kids = tuple(_nnf(k, neg) for k in c.children)
        return (GOr if isinstance(c, GAnd) == neg else GAnd)(kids)
    if isinstance(c, GForall):
        return (GExists if neg else GForall)(c.var, c.type, _nnf(c.body, neg))
    if isinstance(c, GExists):
        return (GForall if neg else GExists)(c.var, c.type, _nnf(c.body, neg))
    if neg:
        raise GoalError("negated counting quantifiers (forn/forpairs) are not supported")
    if isinstance(c, GForN):
        return GForN(c.n, c.var, c.type, _nnf(c.body))
    return GForPairs(c.var1, c.type1, c.var2, c.type2, _nnf(c.body))


class _Overflow(Exception):
    pass


class _Expander:
    def __init__(self, universe: Universe, cap: int):
        self.u = universe
        self.cap = cap
        self.warnings: list[str] = []

    def instances(self, typ: str) -> tuple[ObjectRef, ...]:
        found = self.u.of_type(typ)
        if not found:
            self.warnings.append(f"EmptyDomain: no objects of type {typ!r}")
        return found

    def limit(self, alts: list) -> list:
        if len(alts) > self.cap:
            raise _Overflow
        return alts

    def product(self, parts: list[list[frozenset]]) -> list[frozenset]:
        acc = [frozenset()]
        for alts in parts:
            merged = {a | b for a in acc for b in alts}
            acc = self.limit(list(merged))
        return acc

    def run(self, c: Cond, env: dict[str, str]) -> list[frozenset]:
        if isinstance(c, Lit):
            args = []
            for a in c.args:
                if a.startswith("?") or a in env:
                    if a not in env:
                        raise GoalError(f"unbound goal variable {a}")
                    args.append(env[a])
                else:
                    args.append(a)
            objs = tuple(self.u.resolve(a) for a in args)
            return [frozenset([Literal(Proposition(c.predicate, objs), c.positive)])]
        if isinstance(c, GAnd):
            return self.product([self.run(k, env) for k in c.children])
        if isinstance(c, GOr):
            out: list[frozenset] = []
            for k in c.children:
                out.extend(self.run(k, env))
            return self.limit(list(dict.fromkeys(out)))
        if isinstance(c, GForall):
            objs = self.instances(c.type)
            return self.product([self.run(c.body, {**env, c.var: str(o)}) for o in objs])
        if isinstance(c, GExists):
            out = []
            for o in self.instances(c.type):
                out.extend(self.run(c.body, {**env, c.var: str(o)}))
                self.limit(out)
            return list(dict.fromkeys(out))
        if isinstance(c, GForN):
            objs = self.instances(c.type)
            out = []
            for subset in itertools.combinations(objs, c.n):
                out.extend(self.product([self.run(c.body, {**env, c.var: str(o)}) for o in subset]))
                self.limit(out)
            return list(dict.fromkeys(out))
        if isinstance(c, GForPairs):
            left, right = self.instances(c.type1), self.instances(c.type2)
            out = []
            for pairs in matchings(left, right):
                parts = [
                    self.run(c.body, {**env, c.var1: str(a), c.var2: str(b)}) for a, b in pairs
                ]
                out.extend(self.product(parts))
                self.limit(out)
            return list(dict.fromkeys(out))
        raise GoalError(f"unexpected node {c!r}")


def matchings(left: Sequence, right: Sequence) -> Iterable[tuple[tuple, ...]]:
    """Matchings that pair every element of the smaller side (n! for n x n)."""
    if len(left) <= len(right):
        for perm in itertools.permutations(right, len(left)):
            yield tuple(zip(left, perm))
    else:
        for perm in itertools.permutations(left, len(right)):
            yield tuple(zip(perm, right))


def expand_options(spec: GoalSpec, universe: Universe, cap: int = DEFAULT_OPTION_CAP) -> OptionSet:
    if cap < 1:
        raise ValueError("option cap must be at least 1")
    ex = _Expander(universe, cap)
    try:
        alts = ex.run(_nnf(spec.condition), {})
        overflow = False
    except _Overflow:
        alts, overflow = [], True
    opts = sorted(
        {GoalOption(a, spec.actions) for a in alts}, key=lambda o: sorted(map(str, o.literals))
    )
    return OptionSet(opts[:cap], overflow, sorted(set(ex.warnings)))


def evaluate_condition(c: Cond, state: WorldState, env: dict[str, str] | None = None) -> bool:
    """Direct quantified evaluation (forn reads as 'at least n')."""
    env = env or {}
    u = state.universe
    if isinstance(c, Lit):
        objs = tuple(u.resolve(env.get(a, a)) for a in c.args)
        return state.holds(Proposition(c.predicate, objs)) == c.positive
    if isinstance(c, GNot):
        return not evaluate_condition(c.child, state, env)
    if isinstance(c, GAnd):
        return all(evaluate_condition(k, state, env) for k in c.children)
    if isinstance(c, GOr):
        return any(evaluate_condition(k, state, env) for k in c.children)
    if isinstance(c, GForall):
        return all(evaluate_condition(c.body, state, {**env, c.var: str(o)}) for o in u.of_type(c.type))
    if isinstance(c, GExists):
        return any(evaluate_condition(c.body, state, {**env, c.var: str(o)}) for o in u.of_type(c.type))
    if isinstance(c, GForN):
        n = sum(evaluate_condition(c.body, state, {**env, c.var: str(o)}) for o in u.of_type(c.type))
        return n >= c.n
    return any(
        all(evaluate_condition(c.body, state, {**env, c.var1: str(a), c.var2: str(b)}) for a, b in pairs)
        for pairs in matchings(u.of_type(c.type1), u.of_type(c.type2))
    )


# -- satisfaction --------------------------------------------------------------------------


def actions_matched(goals: Sequence[ActionGoal], executed: Sequence[GroundAction]) -> bool:
    """Subsequence test: each goal action occurs after the previous one."""
    it = iter(executed)
    return all(any(g.matches(a) for a in it) for g in goals)


@dataclass
class GoalBreakdown:
    option_index: int | None
    literals: dict[str, dict[str, bool]] = field(default_factory=dict)
    actions_ok: bool | None = None
    overflow: bool = False
    warnings: list[str] = field(default_factory=list)
    score: float = 1.0

    def unsatisfied(self, category: str) -> list[str]:
        if category == ACTION:
            return [] if self.actions_ok in (None, True) else ["action sequence"]
        return sorted(k for k, v in self.literals.get(category, {}).items() if not v)


def _option_score(opt: GoalOption, final: WorldState, executed) -> tuple[float, dict, bool | None]:
    per = {STATE: {}, RELATION: {}}
    for lit in opt.literals:
        per[lit.category][str(lit)] = lit.holds(final)
    sat = sum(v for d in per.values() for v in d.values())
    total = len(opt.literals)
    acts_ok = None
    if opt.actions:
        acts_ok = actions_matched(opt.actions, executed)
        score = (int(acts_ok) + sat) / (1 + total)
    else:
        score = sat / total if total else 1.0
    return score, per, acts_ok


def check_satisfaction(
    spec: GoalSpec, trajectory: ltl.Trajectory, cap: int = DEFAULT_OPTION_CAP
) -> tuple[bool, GoalBreakdown]:
    final = trajectory.final
    executed = trajectory.actions
    if spec.empty:
        return True, GoalBreakdown(None, {STATE: {}, RELATION: {}})
    opts = expand_options(spec, final.universe, cap)
    best: GoalBreakdown | None = None
    for i, opt in enumerate(opts.options):
        score, per, acts_ok = _option_score(opt, final, executed)
        if best is None or score > best.score:
            best = GoalBreakdown(i, per, acts_ok, opts.overflow, opts.warnings, score)
    if best is None:
        # no enumerable option: either overflow or an unsatisfiable condition
        best = GoalBreakdown(None, {STATE: {}, RELATION: {}}, None, opts.overflow, opts.warnings, 0.0)
    if opts.overflow:
        ok = evaluate_condition(spec.condition, final) and actions_matched(spec.actions, executed)
        if ok:
            best.score = 1.0
        return ok, best
    return best.score == 1.0, best


def partial_success(spec: GoalSpec, trajectory: ltl.Trajectory, cap: int = DEFAULT_OPTION_CAP) -> float:
    return check_satisfaction(spec, trajectory, cap)[1].score


# -- interpretation F1 ---------------------------------------------------------------------


@dataclass(frozen=True)
class PRF:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else (1.0 if not self.fn else 0.0)

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else (1.0 if not self.fp else 0.0)

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 1.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


@dataclass
class InterpretScore:
    overall: PRF
    per_category: dict[str, PRF]
    option_index: int | None
    hallucinated: list[str] = field(default_factory=list)
    false_positives: list[str] = field(default_factory=list)
    false_negatives: list[str] = field(default_factory=list)


def _match_sets(pred: list, gold: list):
    """Greedy exact matching; action sequences compare with alternation."""
    used = set()
    pairs = []
    for p in pred:
        for j, g in enumerate(gold):
            if j in used:
                continue
            same = (
                p.matches(g) if isinstance(p, ActionSeq) and isinstance(g, ActionSeq)
                else (not isinstance(p, ActionSeq) and not isinstance(g, ActionSeq) and p == g)
            )
            if same:
                used.add(j)
                pairs.append((p, g))
                break
    return pairs


def _score_sets(pred: list, gold: list) -> tuple[PRF, dict[str, PRF], list, list]:
    pairs = _match_sets(pred, gold)
    matched_p = {id(p) for p, _ in pairs}
    matched_g = {id(g) for _, g in pairs}
    per = {}
    for cat in CATEGORIES:
        tp = sum(1 for p, _ in pairs if category_of(p) == cat)
        fp = sum(1 for p in pred if category_of(p) == cat and id(p) not in matched_p)
        fn = sum(1 for g in gold if category_of(g) == cat and id(g) not in matched_g)
        if tp or fp or fn:
            per[cat] = PRF(tp, fp, fn)
    overall = PRF(
        sum(x.tp for x in per.values()), sum(x.fp for x in per.values()), sum(x.fn for x in per.values())
    )
    fps = [str(p) for p in pred if id(p) not in matched_p]
    fns = [str(g) for g in gold if id(g) not in matched_g]
    return overall, per, fps, fns


def predicted_elements(
    literals: Iterable[str],
    actions: Iterable[str],
    universe: Universe,
    vocab: Vocabulary | None = None,
) -> tuple[list, list[str]]:
    """Parse predicted goal items, dropping (and reporting) hallucinated ones."""
    out, bad = [], []
    for text in literals:
        try:
            lit = Literal.parse(text)
        except ValueError:
            bad.append(text)
            continue
        if any(a not in universe for a in lit.prop.args):
            bad.append(text)
            continue
        if vocab is not None:
            known = lit.prop.predicate in vocab.predicates or lit.prop.predicate in vocab.properties
            arity = vocab.predicates.get(lit.prop.predicate)
            if not known or (arity is not None and arity != len(lit.prop.args)):
                bad.append(text)
                continue
        out.append(lit)
    out = list(dict.fromkeys(out))
    acts = [ActionGoal.parse(a) for a in actions]
    if vocab is not None:
        keep = []
        for a, text in zip(acts, actions):
            if all(vocab.has_action(n) for n in a.names):
                keep.append(a)
            else:
                bad.append(text)
        acts = keep
    if acts:
        out.append(ActionSeq(tuple(acts)))
    return out, bad


def interpret_f1(
    literals: Iterable[str],
    gt: GoalSpec,
    universe: Universe,
    actions: Iterable[str] = (),
    vocab: Vocabulary | None = None,
    cap: int = DEFAULT_OPTION_CAP,
) -> InterpretScore:
    """Max over ground-truth goal options of the set F1 against the prediction."""
    pred, bad = predicted_elements(list(literals), list(actions), universe, vocab)
    opts = expand_options(gt, universe, cap).options or [GoalOption(frozenset(), gt.actions)]
    best: InterpretScore | None = None
    for i, opt in enumerate(opts):
        overall, per, fps, fns = _score_sets(pred, opt.elements())
        if best is None or overall.f1 > best.overall.f1:
            best = InterpretScore(overall, per, i, bad, fps, fns)
    return best


def set_f1(pred: Iterable, gold: Iterable) -> float:
    p, g = set(pred), set(gold)
    denom = len(p) + len(g)
    return 2 * len(p & g) / denom if denom else 1.0
