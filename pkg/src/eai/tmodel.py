"""Transition-model evaluation: logic-form matching, planning success, sensitivity."""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .domain import Domain, apply_unchecked, bind, data_text, ground_actions, holds
from .domain.pddl import And, Atom, Exists, Expr, Forall, Not, OperatorSchema, Or, When, atoms
from .goals import Literal
from .world import GroundAction, WorldState, action_key

DEFAULT_NODE_BUDGET = 200_000
FOUND, CLOSED, BUDGET = "found", "closed", "budget"


def extract_relevant_operators(trajectory: Iterable) -> set[str]:
    """Distinct action names (upper case) used by a ground-truth trajectory."""
    out = set()
    for a in trajectory:
        if isinstance(a, GroundAction):
            out.add(a.name.upper())
        elif isinstance(a, Mapping):
            out.add(str(a["action"]).upper())
        else:
            text = str(a).strip()
            if text.startswith("["):
                out.add(text[1:text.index("]")].upper())
            else:
                out.add(text.split("(")[0].strip().upper())
    return out


# -- alpha renaming -------------------------------------------------------------


def alpha_rename(op: OperatorSchema) -> OperatorSchema:
    """Rename parameters to ?p0, ?p1, ... and bound variables to ?v0, ?v1, ... in order."""
    mapping = {v: f"?p{i}" for i, (v, _) in enumerate(op.params)}
    counter = itertools.count()

    def go(e: Expr, m: dict[str, str]) -> Expr:
        if isinstance(e, Atom):
            return Atom(e.predicate, tuple(m.get(a, a) for a in e.args))
        if isinstance(e, Not):
            return Not(go(e.child, m))
        if isinstance(e, And):
            return And(tuple(go(c, m) for c in e.children))
        if isinstance(e, Or):
            return Or(tuple(go(c, m) for c in e.children))
        if isinstance(e, When):
            return When(go(e.condition, m), go(e.consequence, m))
        inner = dict(m)
        new_vars = []
        for v, t in e.variables:
            inner[v] = f"?v{next(counter)}"
            new_vars.append((inner[v], t))
        return type(e)(tuple(new_vars), go(e.body, inner))

    params = tuple((mapping[v], t) for v, t in op.params)
    return OperatorSchema(op.name, params, go(op.precondition, mapping), go(op.effect, mapping))


# -- logic-form matching ------------------------------------------------------------


def _matching_size(adj: np.ndarray) -> int:
    if adj.size == 0 or not adj.any():
        return 0
    match = maximum_bipartite_matching(csr_matrix(adj), perm_type="column")
    return int(sum(1 for i, j in enumerate(match) if j != -1 and adj[i, j]))


def match_expressions(pred: Expr, gt: Expr) -> float:
    """Recursive structural similarity; And/Or children are bipartite-matched.

    A child pair counts as matched only when its own score is exactly 1, and the
    matched count is normalized by the smaller child list.
    """
    if isinstance(pred, Atom) and isinstance(gt, Atom):
        return 1.0 if pred == gt else 0.0
    if type(pred) is not type(gt):
        return 0.0
    if isinstance(pred, Not):
        return match_expressions(pred.child, gt.child)
    if isinstance(pred, When):
        ok = match_expressions(pred.condition, gt.condition) == 1 and match_expressions(
            pred.consequence, gt.consequence
        ) == 1
        return 1.0 if ok else 0.0
    if isinstance(pred, (Forall, Exists)):
        if [t for _, t in pred.variables] != [t for _, t in gt.variables]:
            return 0.0
        return match_expressions(pred.body, gt.body)
    a, b = pred.children, gt.children
    if not a and not b:
        return 1.0
    smaller = min(len(a), len(b))
    if smaller == 0:
        return 0.0
    adj = _adjacency(a, b)
    return _matching_size(adj) / smaller


def _adjacency(a: Sequence[Expr], b: Sequence[Expr]) -> np.ndarray:
    adj = np.zeros((len(a), len(b)), dtype=int)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            adj[i, j] = 1 if match_expressions(x, y) == 1 else 0
    return adj


def clauses(e: Expr) -> list[Expr]:
    """Top-level conjuncts with nested top-level And flattened."""
    if isinstance(e, And):
        out: list[Expr] = []
        for c in e.children:
            out.extend(clauses(c))
        return out
    return [e]


@dataclass(frozen=True)
class ClauseScore:
    tp: int
    fp: int
    fn: int
    logic: float  # min-normalized recursive match score
    forced_zero: bool = False  # operator signatures differ

    @property
    def precision(self) -> float:
        if self.forced_zero:
            return 0.0
        d = self.tp + self.fp
        return self.tp / d if d else (1.0 if self.fn == 0 else 0.0)

    @property
    def recall(self) -> float:
        if self.forced_zero:
            return 0.0
        d = self.tp + self.fn
        return self.tp / d if d else (1.0 if self.fp == 0 else 0.0)

    @property
    def f1(self) -> float:
        if self.forced_zero:
            return 0.0
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 1.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
            "recall": self.recall, "f1": self.f1, "logic_score": self.logic,
        }


def score_clauses(pred: Expr, gt: Expr) -> ClauseScore:
    p, g = clauses(pred), clauses(gt)
    tp = _matching_size(_adjacency(p, g))
    return ClauseScore(tp, len(p) - tp, len(g) - tp, match_expressions(And(tuple(p)), And(tuple(g))))


@dataclass(frozen=True)
class MatchReport:
    name: str
    precondition: ClauseScore
    effect: ClauseScore
    arity_mismatch: bool = False

    @property
    def total(self) -> ClauseScore:
        p, e = self.precondition, self.effect
        return ClauseScore(
            p.tp + e.tp, p.fp + e.fp, p.fn + e.fn, (p.logic + e.logic) / 2, self.arity_mismatch
        )


def score_operator(pred_op: OperatorSchema, gt_op: OperatorSchema) -> MatchReport:
    if action_key(pred_op.name) != action_key(gt_op.name) or pred_op.arity != gt_op.arity:
        pre = ClauseScore(
            0, len(clauses(pred_op.precondition)), len(clauses(gt_op.precondition)), 0.0, True
        )
        eff = ClauseScore(0, len(clauses(pred_op.effect)), len(clauses(gt_op.effect)), 0.0, True)
        return MatchReport(gt_op.name, pre, eff, True)
    p, g = alpha_rename(pred_op), alpha_rename(gt_op)
    return MatchReport(
        gt_op.name, score_clauses(p.precondition, g.precondition), score_clauses(p.effect, g.effect)
    )


# -- planning -----------------------------------------------------------------------


@dataclass(frozen=True)
class PlanningProblem:
    name: str
    initial: WorldState
    goal: tuple[Literal, ...]
    actions: tuple[str, ...] = ()  # relevant operator names; empty means all
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class PlanResult:
    status: str
    plan: tuple[GroundAction, ...] = ()
    expanded: int = 0

    @property
    def found(self) -> bool:
        return self.status == FOUND


def _unsat_goals(goal: Sequence[Literal], state: WorldState) -> int:
    return sum(1 for g in goal if not g.holds(state))


def plan(domain: Domain, problem: PlanningProblem, node_budget: int = DEFAULT_NODE_BUDGET) -> PlanResult:
    """Uniform-cost forward search, ties broken by the number of unmet goal literals."""
    names = None
    if problem.actions:
        names = [n for n in problem.actions if domain.find_schema(n) is not None]
    universe = problem.initial.universe
    acts = sorted(ground_actions(domain, universe, names), key=lambda a: a.sort_key())
    compiled = []
    for a in acts:
        op = domain.schema(a.name)
        compiled.append((a, op, bind(domain, op, a.args, universe)))
    start = problem.initial
    tie = itertools.count()
    frontier = [(0, _unsat_goals(problem.goal, start), next(tie), start, ())]
    seen = {start}
    expanded = 0
    while frontier:
        g, h, _, state, path = heapq.heappop(frontier)
        if h == 0:
            return PlanResult(FOUND, path, expanded)
        if expanded >= node_budget:
            return PlanResult(BUDGET, (), expanded)
        expanded += 1
        for a, op, env in compiled:
            if not holds(op.precondition, state, env):
                continue
            post = apply_unchecked(state, a, domain)
            if post in seen:
                continue
            seen.add(post)
            heapq.heappush(frontier, (g + 1, _unsat_goals(problem.goal, post), next(tie), post, path + (a,)))
    return PlanResult(CLOSED, (), expanded)


# -- success rates and sensitivity --------------------------------------------------------


@dataclass
class SuccessReport:
    overall: float | None
    per_category: dict[str, float]
    per_problem: dict[str, str]


def _rates(outcomes: Mapping[str, bool], problems: Sequence[PlanningProblem]) -> tuple[float | None, dict]:
    per: dict[str, list[bool]] = {}
    flat: list[bool] = []
    for p in problems:
        if p.name not in outcomes:
            continue
        cats = p.categories or ("uncategorized",)
        for c in cats:
            per.setdefault(c, []).append(outcomes[p.name])
            flat.append(outcomes[p.name])
    rates = {c: sum(v) / len(v) for c, v in sorted(per.items())}
    overall = sum(flat) / len(flat) if flat else None
    return overall, rates


def planner_success(
    domain: Domain, problems: Sequence[PlanningProblem], node_budget: int = DEFAULT_NODE_BUDGET
) -> SuccessReport:
    statuses = {p.name: plan(domain, p, node_budget).status for p in problems}
    overall, per = _rates({k: v == FOUND for k, v in statuses.items()}, problems)
    return SuccessReport(overall, per, statuses)


def compose(gt: Domain, predicted: Iterable[OperatorSchema]) -> Domain:
    """Ground-truth domain with predicted operators swapped in by name."""
    return gt.with_schemas(predicted)


@dataclass
class SensitivityRow:
    action: str
    overall: float | None  # None: no problem uses the action
    per_category: dict[str, float]
    per_problem: dict[str, str]


def sensitivity(
    gt: Domain,
    predicted: Mapping[str, OperatorSchema] | Iterable[OperatorSchema],
    problems: Sequence[PlanningProblem],
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> dict[str, SensitivityRow]:
    """Swap one predicted operator at a time into the ground-truth set and replan."""
    if not isinstance(predicted, Mapping):
        predicted = {op.name.upper(): op for op in predicted}
    table = {}
    for name, op in sorted(predicted.items()):
        users = [p for p in problems if not p.actions or action_key(name) in {action_key(a) for a in p.actions}]
        if not users:
            table[name.upper()] = SensitivityRow(name.upper(), None, {}, {})
            continue
        dom = compose(gt, [op])
        statuses = {p.name: plan(dom, p, node_budget).status for p in users}
        overall, per = _rates({k: v == FOUND for k, v in statuses.items()}, users)
        table[name.upper()] = SensitivityRow(name.upper(), overall, per, statuses)
    return table


# -- task categorization -------------------------------------------------------------------

CATEGORY_ORDER = (
    "object_states",
    "object_orientation",
    "object_affordance",
    "spatial_relations",
    "non_spatial_relations",
)


def predicate_categories() -> dict[str, str]:
    table = json.loads(data_text("predicate_categories.json"))
    return {p: c for c, preds in table.items() for p in preds}


def program_predicates(domain: Domain, actions: Iterable[str]) -> set[str]:
    out = set()
    for name in actions:
        op = domain.find_schema(name)
        if op is None:
            continue
        for a in itertools.chain(atoms(op.precondition), atoms(op.effect)):
            if a.predicate != "=":
                out.add(a.predicate)
    return out


def categorize_tasks(
    programs: Mapping[str, set[str]], table: Mapping[str, str] | None = None, k: int = 2
) -> dict[str, tuple[str, ...]]:
    """Top-k categories per program by summed IDF of its predicates."""
    table = predicate_categories() if table is None else table
    n = len(programs)
    df: dict[str, int] = {}
    for preds in programs.values():
        for t in preds:
            df[t] = df.get(t, 0) + 1
    idf = {t: math.log(n / c) for t, c in df.items()}
    out = {}
    for name, preds in programs.items():
        scores = {c: 0.0 for c in CATEGORY_ORDER}
        for t in preds:
            c = table.get(t)
            if c is not None:
                scores[c] += idf[t]
        ranked = sorted(
            (c for c in CATEGORY_ORDER if scores[c] > 0),
            key=lambda c: (-scores[c], CATEGORY_ORDER.index(c)),
        )
        out[name] = tuple(ranked[:k])
    return out


__all__ = [
    "BUDGET",
    "CLOSED",
    "ClauseScore",
    "FOUND",
    "MatchReport",
    "PlanResult",
    "PlanningProblem",
    "SensitivityRow",
    "SuccessReport",
    "alpha_rename",
    "categorize_tasks",
    "clauses",
    "compose",
    "extract_relevant_operators",
    "match_expressions",
    "plan",
    "planner_success",
    "program_predicates",
    "score_clauses",
    "score_operator",
    "sensitivity",
]
