"""Plan execution with grammar/runtime error classification and replanning feedback."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .domain import (
    BindingError,
    Domain,
    affordable,
    apply_unchecked,
    bind,
    failed_preconditions,
    holds,
    make_action,
    redundant,
    render_expr,
)
from .ltl import Trajectory
from .world import GroundAction, ObjectRef, Universe, UnknownObject, WorldState

GRAMMAR = "grammar"
RUNTIME = "runtime"


class InternalContractViolation(Exception):
    """Raised when a caller breaks a documented precondition of this module."""


@dataclass(frozen=True)
class ErrorCategory:
    kind: str
    detail: str = ""

    @property
    def group(self) -> str:
        return GRAMMAR if self.kind in GRAMMAR_KINDS else RUNTIME

    @property
    def label(self) -> str:
        return LABELS[self.kind]

    def __str__(self) -> str:
        return f"{self.kind}({self.detail})" if self.detail else self.kind


PARSING = ErrorCategory("parsing")
ARG_NUMBER = ErrorCategory("arg_number")
AFFORDANCE = ErrorCategory("affordance")
ADDITIONAL_STEP = ErrorCategory("additional_step")
MISSING_STEP = ErrorCategory("missing_step")
WRONG_ORDER = ErrorCategory("wrong_order")


def hallucination(kind: str) -> ErrorCategory:
    return ErrorCategory("hallucination", kind)


GRAMMAR_KINDS = ("parsing", "hallucination", "arg_number")
RUNTIME_KINDS = ("wrong_order", "missing_step", "affordance", "additional_step")
LABELS = {
    "parsing": "PARSING",
    "hallucination": "HALLUCINATION",
    "arg_number": "ARGUMENT NUMBER",
    "affordance": "AFFORDANCE",
    "additional_step": "ADDITIONAL STEP",
    "missing_step": "MISSING STEP",
    "wrong_order": "WRONG ORDER",
}

# -- raw action syntax ------------------------------------------------------------

_CALL = re.compile(r"\s*([A-Za-z_][\w]*)\s*\(([^()]*)\)\s*")
_SCRIPT = re.compile(r"\s*\[([A-Za-z_]\w*)\]((?:\s*<[^<>]+>\s*\(\s*\d+\s*\))*)\s*")
_SCRIPT_ARG = re.compile(r"<([^<>]+)>\s*\(\s*(\d+)\s*\)")
_ARG = re.compile(r"[A-Za-z_][\w.]*")


@dataclass(frozen=True)
class RawStep:
    name: str
    args: tuple[str, ...]


def parse_raw(text: str) -> RawStep | None:
    """``NAME(a, b)`` or a script line ``[NAME] <obj> (id)``; None when malformed."""
    if not isinstance(text, str):
        return None
    m = _CALL.fullmatch(text)
    if m:
        inner = m.group(2).strip()
        args = tuple(a.strip() for a in inner.split(",")) if inner else ()
        if any(not _ARG.fullmatch(a) for a in args):
            return None
        return RawStep(m.group(1), args)
    m = _SCRIPT.fullmatch(text)
    if m:
        args = tuple(f"{n.strip()}.{i}" for n, i in _SCRIPT_ARG.findall(m.group(2)))
        return RawStep(m.group(1), args)
    return None


def action_from_record(rec) -> str:
    """Normalize ``{"action": ..., "object": ...}`` records to ``NAME(obj)`` text."""
    if isinstance(rec, str):
        return rec
    objs = rec.get("object", rec.get("objects", []))
    if isinstance(objs, str):
        objs = [o.strip() for o in objs.split(",") if o.strip()]
    refs = []
    for o in objs:
        try:
            refs.append(str(ObjectRef.parse(o)))
        except ValueError:
            refs.append(o)
    return f"{rec['action']}({', '.join(refs)})"


def _resolve_arg(arg: str, universe: Universe) -> ObjectRef:
    try:
        return universe.resolve(arg)
    except (UnknownObject, ValueError):
        pass
    obj = ObjectRef.parse(arg)  # ValueError propagates for non-object text
    if obj in universe:
        return obj
    raise UnknownObject(arg)


@dataclass(frozen=True)
class LintResult:
    action: GroundAction | None
    category: ErrorCategory | None
    message: str = ""


def lint_step(raw: str, domain: Domain, universe: Universe) -> LintResult:
    step = parse_raw(raw)
    if step is None:
        return LintResult(None, PARSING, f"cannot parse {raw!r}")
    op = domain.find_schema(step.name)
    if op is None:
        return LintResult(None, hallucination("action"), f"unknown action {step.name}")
    expected = len(domain.user_params(op))
    if len(step.args) != expected:
        return LintResult(
            None, ARG_NUMBER, f"{step.name} takes {expected} arguments, got {len(step.args)}"
        )
    args = []
    for a in step.args:
        try:
            args.append(_resolve_arg(a, universe))
        except (UnknownObject, ValueError):
            return LintResult(None, hallucination("object"), f"unknown object {a}")
    return LintResult(make_action(domain, op.name, args), None)


def lint_plan(plan: Sequence[str], domain: Domain, universe: Universe) -> list[tuple[int, ErrorCategory]]:
    out = []
    for i, raw in enumerate(plan):
        res = lint_step(raw, domain, universe)
        if res.category is not None:
            out.append((i, res.category))
    return out


# -- runtime classification --------------------------------------------------------


def categorize_failure(
    action: GroundAction, current: WorldState, history: Sequence[WorldState], domain: Domain
) -> ErrorCategory:
    """Decision tree: affordance, then redundancy, then missing step vs wrong order."""
    try:
        bind(domain, domain.schema(action.name), action.args, current.universe)
    except BindingError:
        return AFFORDANCE
    if not affordable(current, action, domain):
        return AFFORDANCE
    if redundant(current, action, domain):
        return ADDITIONAL_STEP
    unmet = failed_preconditions(current, action, domain)
    if not unmet:
        raise InternalContractViolation(f"{action} is applicable and not redundant")
    for past in history:
        if all(holds(leaf, past) for leaf in unmet):
            return WRONG_ORDER
    return MISSING_STEP


# -- execution ----------------------------------------------------------------------

FailHook = Callable[[int, GroundAction], bool]


@dataclass(frozen=True)
class StepRecord:
    index: int
    raw: str
    action: GroundAction | None
    pre_state: WorldState
    post_state: WorldState | None
    category: ErrorCategory | None = None
    message: str = ""
    inserted: tuple[GroundAction, ...] = ()
    injected: bool = False

    @property
    def ok(self) -> bool:
        return self.post_state is not None


@dataclass(frozen=True)
class ExecutionTrace:
    initial: WorldState
    plan: tuple[str, ...]
    steps: tuple[StepRecord, ...]
    completed: bool
    final: WorldState

    @property
    def stop_index(self) -> int | None:
        return None if self.completed else len(self.steps) - 1

    @property
    def failure(self) -> StepRecord | None:
        return None if self.completed else self.steps[-1]

    @property
    def category(self) -> ErrorCategory | None:
        f = self.failure
        return None if f is None else f.category

    @property
    def injected(self) -> bool:
        f = self.failure
        return f is not None and f.injected

    @property
    def executed(self) -> list[StepRecord]:
        return [s for s in self.steps if s.ok]

    def states(self) -> list[WorldState]:
        return [self.initial] + [s.post_state for s in self.executed]

    def actions(self) -> list[GroundAction]:
        return [s.action for s in self.executed]

    def trajectory(self) -> Trajectory:
        return Trajectory(tuple(self.states()), tuple(self.actions()))


def _auto_navigate(state: WorldState, action: GroundAction, domain: Domain):
    """Insert navigation when the only unmet preconditions are agent adjacency."""
    if not (domain.auto_navigate and domain.navigate_action and domain.adjacency_predicate):
        return state, ()
    unmet = failed_preconditions(state, action, domain)
    targets = []
    for leaf in unmet:
        if getattr(leaf, "predicate", None) != domain.adjacency_predicate:
            return state, ()
        targets.append(leaf.args[-1])
    inserted = []
    for t in targets:
        nav = make_action(domain, domain.navigate_action, [state.universe.resolve(t)])
        if failed_preconditions(state, nav, domain):
            return state, ()
        state = apply_unchecked(state, nav, domain)
        inserted.append(nav)
    return state, tuple(inserted)


def execute(
    initial: WorldState,
    plan: Sequence[str],
    domain: Domain,
    fail_hook: FailHook | None = None,
) -> ExecutionTrace:
    """Run ``plan`` step by step; stop at the first step that cannot be executed."""
    state = initial
    history = [initial]
    records: list[StepRecord] = []
    plan = tuple(plan)
    for i, raw in enumerate(plan):
        lint = lint_step(raw, domain, initial.universe)
        if lint.category is not None:
            records.append(StepRecord(i, raw, None, state, None, lint.category, lint.message))
            return ExecutionTrace(initial, plan, tuple(records), False, state)
        action = lint.action
        try:
            unmet = failed_preconditions(state, action, domain)
        except BindingError as exc:
            records.append(StepRecord(i, raw, action, state, None, AFFORDANCE, str(exc)))
            return ExecutionTrace(initial, plan, tuple(records), False, state)
        pre, inserted = state, ()
        if unmet:
            pre, inserted = _auto_navigate(state, action, domain)
            if inserted:
                unmet = failed_preconditions(pre, action, domain)
        if unmet:
            cat = categorize_failure(action, state, history, domain)
            msg = ", ".join(render_expr(e) for e in unmet)
            records.append(StepRecord(i, raw, action, state, None, cat, msg))
            return ExecutionTrace(initial, plan, tuple(records), False, state)
        if fail_hook is not None and fail_hook(i, action):
            records.append(StepRecord(i, raw, action, state, None, None, "injected failure", injected=True))
            return ExecutionTrace(initial, plan, tuple(records), False, state)
        post = apply_unchecked(pre, action, domain)
        records.append(StepRecord(i, raw, action, state, post, inserted=inserted))
        state = post
        history.append(state)
    return ExecutionTrace(initial, plan, tuple(records), True, state)


def seeded_fail_hook(prob: float, seed: int | None) -> FailHook:
    """Each executed step fails independently with probability ``prob``."""
    rng = random.Random(seed)

    def hook(step: int, action: GroundAction) -> bool:
        return prob > 0 and rng.random() < prob

    return hook


# -- feedback -------------------------------------------------------------------------


def _plan_text(actions: Iterable[str]) -> str:
    return "[" + ", ".join(actions) + "]"


_CATEGORY_SENTENCES = {
    "missing_step": "Missing step means that action {action} needs some other necessary action before its execution.",
    "wrong_order": "Wrong order means that action {action} was executable earlier in the sequence but its preconditions no longer hold, so the actions are out of order.",
    "affordance": "Affordance error means that the objects of action {action} do not have the properties the action requires.",
    "additional_step": "Additional step means that the effect of action {action} already holds, so the action is redundant.",
    "parsing": "Parsing error means that action {action} does not follow the format ACTION(object, ...).",
    "hallucination": "Hallucination error means that action {action} uses an action or object name that does not exist in the environment.",
    "arg_number": "Argument number error means that action {action} is given the wrong number of arguments.",
}


@dataclass
class GoalReport:
    """Unsatisfied goals grouped the way the feedback message lists them."""

    node: list[str] = field(default_factory=list)
    edge: list[str] = field(default_factory=list)
    action: list[str] = field(default_factory=list)

    @property
    def satisfied(self) -> bool:
        return not (self.node or self.edge or self.action)


def feedback_message(trace: ExecutionTrace, goals: GoalReport | None = None, retry_count: int = 0) -> str:
    actions = list(trace.plan)
    head = f"At the {retry_count} retry, LLM predict the action sequence to be {_plan_text(actions)}"
    failure = trace.failure
    if failure is not None:
        if failure.injected:
            body = (
                f"Action {failure.raw} failed during execution in the action sequence "
                f"{_plan_text(actions)}. The environment did not change; please plan the remaining steps again."
            )
        else:
            cat = failure.category
            sentence = _CATEGORY_SENTENCES[cat.kind].format(action=failure.raw)
            body = (
                f"Action {failure.raw} is not executable in the action sequence {_plan_text(actions)}. "
                f"It encounters an error: {cat.label}. {sentence}"
            )
        return f"{head}\n{body}"
    if goals is None or goals.satisfied:
        return ""
    body = (
        f"Action sequence {_plan_text(actions)} does not satisfy all the goals. "
        "Please check the action sequence and try again. Specifically, the following goals are not satisfied: "
        f"Node goals not satisfied: {_plan_text(goals.node)} "
        f"Edge goals not satisfied: {_plan_text(goals.edge)} "
        f"Action goals not satisfied: {_plan_text(goals.action)}"
    )
    return f"{head}\n{body}"


# -- replanning harness --------------------------------------------------------------

Replanner = Callable[[list[str], ExecutionTrace, str, int], Sequence[str]]


def resubmit_remaining(plan: list[str], trace: ExecutionTrace, feedback: str, retry: int) -> list[str]:
    """Default replanner: after an injected failure, retry the steps that did not run."""
    done = len(trace.executed)
    return list(plan[done:])


@dataclass(frozen=True)
class ReplanResult:
    attempts: tuple[ExecutionTrace, ...]
    feedback: tuple[str, ...]
    completed: bool
    final: WorldState
    executed_actions: tuple[GroundAction, ...]
    executed_states: tuple[WorldState, ...]

    def trajectory(self) -> Trajectory:
        return Trajectory(self.executed_states, self.executed_actions)


def run_with_replanning(
    initial: WorldState,
    plan: Sequence[str],
    domain: Domain,
    fail_prob: float = 0.0,
    seed: int | None = 0,
    retries: int = 0,
    replanner: Replanner = resubmit_remaining,
    goal_check: Callable[[Trajectory], GoalReport] | None = None,
) -> ReplanResult:
    """Execute with seeded failure injection; on failure, ask ``replanner`` for a new suffix.

    Each retry continues from the state where the previous attempt stopped, so the
    overall trajectory is the concatenation of every executed step.
    """
    hook = seeded_fail_hook(fail_prob, seed)
    state = initial
    states = [initial]
    actions: list[GroundAction] = []
    attempts, messages = [], []
    current = list(plan)
    for retry in range(retries + 1):
        trace = execute(state, current, domain, fail_hook=hook)
        attempts.append(trace)
        states.extend(s.post_state for s in trace.executed)
        actions.extend(s.action for s in trace.executed)
        state = trace.final
        goals = None
        if trace.completed and goal_check is not None:
            goals = goal_check(Trajectory(tuple(states), tuple(actions)))
        msg = feedback_message(trace, goals, retry)
        messages.append(msg)
        if trace.completed or retry == retries:
            break
        current = list(replanner(current, trace, msg, retry + 1))
    done = attempts[-1].completed
    return ReplanResult(tuple(attempts), tuple(messages), done, state, tuple(actions), tuple(states))
