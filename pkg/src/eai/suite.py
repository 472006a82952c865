"""The four module evaluations, pipeline composition and sensitivity over a task suite."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Callable, Mapping, Sequence

from . import goals as G
from .domain import Domain, DomainError
from .domain.pddl import PddlError, parse_domain_text
from .executor import GoalReport, action_from_record, run_with_replanning
from .ltl import Trajectory
from .report import PIPELINE, SENSITIVITY, EvalReport
from .subgoal import DEFAULT_DEPTH_CAP, evaluate_subgoal_plan
from .tasks import (
    ACTION_SEQUENCING,
    GOAL_INTERPRETATION,
    SUBGOAL_DECOMPOSITION,
    TRANSITION_MODELING,
    PredictionRecord,
    TaskError,
    TaskRecord,
    resolve_domain,
)
from .tmodel import (
    DEFAULT_NODE_BUDGET,
    FOUND,
    categorize_tasks,
    clauses,
    compose,
    plan,
    program_predicates,
    score_operator,
    sensitivity,
)
from .world import action_key


@dataclass(frozen=True)
class SuiteOptions:
    domain: str | None = None  # overrides every task's own domain
    depth_cap: int = DEFAULT_DEPTH_CAP
    option_cap: int = G.DEFAULT_OPTION_CAP
    node_budget: int = DEFAULT_NODE_BUDGET
    parallel: int = 1
    fail_prob: float = 0.0
    seed: int = 0
    retries: int = 0

    def as_meta(self) -> dict:
        meta = asdict(self)
        del meta["parallel"]  # output must not depend on the worker count
        return meta


def task_domain(task: TaskRecord, options: SuiteOptions) -> Domain:
    return resolve_domain(options.domain) if options.domain else task.domain


def task_seed(seed: int, task_id: str) -> int:
    """Per-task RNG seed, independent of scheduling order."""
    return zlib.crc32(f"{seed}:{task_id}".encode())


def _vocabulary(task: TaskRecord, domain: Domain):
    return domain.vocabulary(set().union(*task.universe.properties.values()))


def _run(fn: Callable[[TaskRecord], dict], tasks: Sequence[TaskRecord], parallel: int) -> list[dict]:
    if parallel > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(fn, tasks))
    else:
        rows = [fn(t) for t in tasks]
    return sorted(rows, key=lambda r: r["task_id"])


def _base_row(task: TaskRecord, missing: bool) -> dict:
    row: dict[str, Any] = {"task_id": task.task_id, "missing_prediction": missing}
    if task.extra:
        row["task_fields"] = task.extra
    return row


# -- goal interpretation ---------------------------------------------------------------


def _split_goal_payload(payload) -> tuple[list[str], list[str]]:
    if isinstance(payload, Mapping):
        return list(payload.get("literals", ())), list(payload.get("actions", ()))
    return list(payload), []


def eval_goal_task(task: TaskRecord, pred: PredictionRecord | None, options: SuiteOptions) -> dict:
    domain = task_domain(task, options)
    literals, actions = _split_goal_payload(pred.payload) if pred is not None else ([], [])
    score = G.interpret_f1(literals, task.goal, task.universe, actions, _vocabulary(task, domain), options.option_cap)
    row = _base_row(task, pred is None)
    for cat in G.CATEGORIES:
        prf = score.per_category.get(cat, G.PRF(0, 0, 0))
        row.update({f"{cat}_tp": prf.tp, f"{cat}_fp": prf.fp, f"{cat}_fn": prf.fn})
    row.update(
        precision=score.overall.precision,
        recall=score.overall.recall,
        f1=score.overall.f1,
        hallucinated=list(score.hallucinated),
        false_positives=score.false_positives,
        false_negatives=score.false_negatives,
    )
    return row


# -- action sequencing and subgoal decomposition -------------------------------------------


def _goal_report(goal: G.GoalSpec, cap: int) -> Callable[[Trajectory], GoalReport]:
    def check(traj: Trajectory) -> GoalReport:
        _, br = G.check_satisfaction(goal, traj, cap)
        return GoalReport(br.unsatisfied(G.STATE), br.unsatisfied(G.RELATION), br.unsatisfied(G.ACTION))

    return check


def _failed_row(task: TaskRecord) -> dict:
    row = _base_row(task, True)
    row.update(success=False, executable=False, error=None, partial=0.0, injected=False)
    return row


def _sequence(task, pred, options, goal) -> tuple[dict, Trajectory | None]:
    if pred is None:
        return _failed_row(task), None
    domain = task_domain(task, options)
    steps = [action_from_record(a) for a in pred.payload]
    rr = run_with_replanning(
        task.initial, steps, domain,
        fail_prob=options.fail_prob,
        seed=task_seed(options.seed, task.task_id),
        retries=options.retries,
        goal_check=_goal_report(goal, options.option_cap),
    )
    traj = rr.trajectory()
    ok, br = G.check_satisfaction(goal, traj, options.option_cap)
    last = rr.attempts[-1]
    failure = last.failure
    cat = last.category
    row = _base_row(task, False)
    row.update(
        success=bool(rr.completed and ok),
        executable=rr.completed,
        error=cat.kind if cat else None,
        error_detail=(cat.detail if cat and cat.detail else (failure.message if failure else "")),
        failed_step=failure.index if failure is not None else None,
        partial=br.score,
        injected=bool(last.injected),
        attempts=len(rr.attempts),
        executed=[str(a) for a in rr.executed_actions],
        feedback=[m for m in rr.feedback if m],
    )
    return row, traj


def _subgoal(task, pred, options, goal) -> tuple[dict, Trajectory | None]:
    if pred is None:
        return _failed_row(task), None
    domain = task_domain(task, options)
    ev = evaluate_subgoal_plan(pred.payload, task.initial, goal, domain, options.depth_cap, options.option_cap)
    row = _base_row(task, False)
    row.update(
        success=ev.success,
        executable=ev.executable,
        error=ev.category.kind if ev.category else None,
        error_detail=ev.category.detail if ev.category and ev.category.detail else "",
        failed_segment=ev.failed_segment,
        partial=ev.partial,
        injected=False,
        alternatives_tried=ev.alternatives_tried,
        executed=ev.mapping.plan_text() if ev.mapping is not None and ev.mapping.ok else [],
        findings=ev.findings,
    )
    return row, (ev.trace.trajectory() if ev.trace is not None else None)


def eval_sequence_task(task: TaskRecord, pred: PredictionRecord | None, options: SuiteOptions) -> dict:
    return _sequence(task, pred, options, task.goal)[0]


def eval_subgoal_task(task: TaskRecord, pred: PredictionRecord | None, options: SuiteOptions) -> dict:
    return _subgoal(task, pred, options, task.goal)[0]


# -- transition modeling ----------------------------------------------------------------


def predicted_operators(payload: str) -> tuple[list, str | None]:
    try:
        return parse_domain_text(payload).schemas, None
    except PddlError as exc:
        return [], str(exc)


def eval_transition_task(
    task: TaskRecord, pred: PredictionRecord | None, options: SuiteOptions, categories: Sequence[str] = ()
) -> dict:
    domain = task_domain(task, options)
    relevant = task.relevant_operators(domain)
    ops, error = predicted_operators(pred.payload) if pred is not None else ([], None)
    by_key = {action_key(op.name): op for op in ops}
    counts = {f"{p}_{k}": 0 for p in ("pre", "eff") for k in ("tp", "fp", "fn")}
    per_op, logic, swapped = {}, [], []
    for name in relevant:
        gt_op = domain.schema(name)
        p = by_key.get(action_key(name))
        if p is None:
            counts["pre_fn"] += len(clauses(gt_op.precondition))
            counts["eff_fn"] += len(clauses(gt_op.effect))
            per_op[name] = "missing"
            logic.append(0.0)
            continue
        rep = score_operator(p, gt_op)
        for part, sc in (("pre", rep.precondition), ("eff", rep.effect)):
            counts[f"{part}_tp"] += sc.tp
            counts[f"{part}_fp"] += sc.fp
            counts[f"{part}_fn"] += sc.fn
        per_op[name] = {"precondition": rep.precondition.as_dict(), "effect": rep.effect.as_dict(),
                        "arity_mismatch": rep.arity_mismatch}
        logic.append(rep.total.logic)
        swapped.append(p)
    problem = task.planning_problem(categories, domain)
    try:
        status = plan(compose(domain, swapped), problem, options.node_budget).status
    except (DomainError, PddlError) as exc:
        status, error = "invalid", error or str(exc)
    gt_status = plan(domain, problem, options.node_budget).status
    row = _base_row(task, pred is None)
    row.update(counts)
    row.update(
        categories=list(categories),
        logic=sum(logic) / len(logic) if logic else 1.0,
        planner_status=status,
        planner_found=status == FOUND,
        gt_planner_found=gt_status == FOUND,
        operators=per_op,
        parse_error=error,
    )
    return row


def task_categories(tasks: Sequence[TaskRecord], options: SuiteOptions, k: int = 2) -> dict[str, tuple[str, ...]]:
    programs = {}
    for t in tasks:
        domain = task_domain(t, options)
        programs[t.task_id] = program_predicates(domain, t.relevant_operators(domain))
    return categorize_tasks(programs, k=k)


# -- suite entry points -------------------------------------------------------------------


def _check_predictions(tasks, predictions: Mapping[str, PredictionRecord], module: str) -> None:
    known = {t.task_id for t in tasks}
    for tid, rec in predictions.items():
        if tid not in known:
            raise TaskError(f"prediction references unknown task {tid}")
        if rec.module != module:
            raise TaskError(f"prediction for {tid} is tagged {rec.module}, expected {module}")


def eval_suite(
    tasks: Sequence[TaskRecord],
    predictions: Mapping[str, PredictionRecord],
    module: str,
    options: SuiteOptions = SuiteOptions(),
) -> EvalReport:
    _check_predictions(tasks, predictions, module)
    if module == TRANSITION_MODELING:
        cats = task_categories(tasks, options)
        fn = lambda t: eval_transition_task(t, predictions.get(t.task_id), options, cats[t.task_id])  # noqa: E731
    else:
        single = {
            GOAL_INTERPRETATION: eval_goal_task,
            ACTION_SEQUENCING: eval_sequence_task,
            SUBGOAL_DECOMPOSITION: eval_subgoal_task,
        }.get(module)
        if single is None:
            raise TaskError(f"unknown module {module!r}")
        fn = lambda t: single(t, predictions.get(t.task_id), options)  # noqa: E731
    rows = _run(fn, list(tasks), options.parallel)
    return EvalReport.build(module, rows, {"module": module, "options": options.as_meta()})


def predicted_goal(task: TaskRecord, rec: PredictionRecord, options: SuiteOptions) -> tuple[G.GoalSpec, list[str]]:
    """Upstream goal-interpretation output as a goal spec; hallucinated items are dropped."""
    literals, actions = _split_goal_payload(rec.payload)
    vocab = _vocabulary(task, task_domain(task, options))
    elems, bad = G.predicted_elements(literals, actions, task.universe, vocab)
    lits = [str(e) for e in elems if isinstance(e, G.Literal)]
    acts = [str(a) for e in elems if isinstance(e, G.ActionSeq) for a in e.goals]
    return G.spec_from_literals(lits, acts), bad


def pipeline(
    tasks: Sequence[TaskRecord],
    upstream: Mapping[str, PredictionRecord],
    downstream: Mapping[str, PredictionRecord],
    downstream_module: str = ACTION_SEQUENCING,
    options: SuiteOptions = SuiteOptions(),
) -> EvalReport:
    """Score downstream plans against the upstream-predicted goal and against the true goal."""
    _check_predictions(tasks, upstream, GOAL_INTERPRETATION)
    _check_predictions(tasks, downstream, downstream_module)
    runner = {ACTION_SEQUENCING: _sequence, SUBGOAL_DECOMPOSITION: _subgoal}.get(downstream_module)
    if runner is None:
        raise TaskError(f"pipeline downstream must be action_sequencing or subgoal_decomposition, got {downstream_module}")

    def one(task: TaskRecord) -> dict:
        up = upstream.get(task.task_id)
        if up is None:
            row = _failed_row(task)
            row.update(success_gt=False, upstream_missing=True, upstream_hallucinated=[])
            return row
        goal, bad = predicted_goal(task, up, options)
        row, traj = runner(task, downstream.get(task.task_id), options, goal)
        ok_gt = traj is not None and G.check_satisfaction(task.goal, traj, options.option_cap)[0]
        row.update(success_gt=bool(row["executable"] and ok_gt), upstream_missing=False,
                   upstream_hallucinated=bad, predicted_goal=[str(c) for c in _goal_items(goal)])
        return row

    rows = _run(one, list(tasks), options.parallel)
    meta = {"module": PIPELINE, "downstream": downstream_module, "options": options.as_meta()}
    return EvalReport.build(PIPELINE, rows, meta)


def _goal_items(goal: G.GoalSpec) -> list[str]:
    items = [_render_lit(c) for c in getattr(goal.condition, "children", ())]
    return items + [str(a) for a in goal.actions]


def _render_lit(c) -> str:
    text = f"{c.predicate}({', '.join(c.args)})"
    return text if c.positive else f"not {text}"


def sensitivity_suite(
    tasks: Sequence[TaskRecord],
    predictions: Mapping[str, PredictionRecord],
    options: SuiteOptions = SuiteOptions(),
) -> EvalReport:
    """Per-action sensitivity: swap each predicted operator alone into its task domain."""
    _check_predictions(tasks, predictions, TRANSITION_MODELING)
    cats = task_categories(tasks, options)
    groups: dict[str, list[TaskRecord]] = {}
    for t in tasks:
        groups.setdefault(task_domain(t, options).name, []).append(t)
    rows = []
    for dom_name, members in sorted(groups.items()):
        domain = task_domain(members[0], options)
        ops: dict = {}
        for t in members:
            rec = predictions.get(t.task_id)
            if rec is None:
                continue
            for op in predicted_operators(rec.payload)[0]:
                ops.setdefault(op.name.upper(), op)
        problems = [t.planning_problem(cats[t.task_id], domain) for t in members]
        table = sensitivity(domain, ops, problems, options.node_budget)
        for name, r in table.items():
            rows.append({"action": f"{dom_name}/{name}", "domain": dom_name, "overall": r.overall,
                         "per_category": r.per_category, "per_problem": r.per_problem})
    meta = {"module": SENSITIVITY, "options": options.as_meta()}
    return EvalReport.build(SENSITIVITY, rows, meta)


__all__ = [
    "SuiteOptions",
    "eval_goal_task",
    "eval_sequence_task",
    "eval_subgoal_task",
    "eval_suite",
    "eval_transition_task",
    "pipeline",
    "predicted_goal",
    "predicted_operators",
    "sensitivity_suite",
    "task_categories",
    "task_seed",
]
