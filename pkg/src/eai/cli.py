"""Command-line front end: ``eai eval|pipeline|sensitivity|export-pddl|report``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .domain import DomainError
from .domain.pddl import PddlError
from .executor import InternalContractViolation
from .goals import GoalError
from .report import EvalReport
from .suite import SuiteOptions, eval_suite, pipeline, sensitivity_suite, task_domain
from .tasks import (
    ACTION_SEQUENCING,
    GOAL_INTERPRETATION,
    SUBGOAL_DECOMPOSITION,
    TRANSITION_MODELING,
    TaskError,
    TaskRecord,
    fixture_tasks,
    ground_truth_predictions,
    load_predictions,
    load_tasks,
)
from .world import WorldError

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

MODULE_NAMES = {
    "goal-interp": GOAL_INTERPRETATION,
    "action-seq": ACTION_SEQUENCING,
    "subgoal": SUBGOAL_DECOMPOSITION,
    "transition": TRANSITION_MODELING,
}

INPUT_ERRORS = (TaskError, GoalError, PddlError, DomainError, WorldError, ValueError, OSError)


def _common(p: argparse.ArgumentParser, pred: bool = True) -> None:
    p.add_argument("--tasks", help="task JSON file (default: the bundled fixture corpus)")
    p.add_argument("--domain", help="built-in domain name or PDDL file overriding each task's domain")
    if pred:
        p.add_argument("--pred", default="gt",
                       help="prediction JSON file, or 'gt' to use the ground-truth annotations")
    p.add_argument("--out", help="output directory (default: print to stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--depth-cap", type=int, default=SuiteOptions.depth_cap)
    p.add_argument("--option-cap", type=int, default=SuiteOptions.option_cap)
    p.add_argument("--node-budget", type=int, default=SuiteOptions.node_budget)
    p.add_argument("--parallel", type=int, default=1, help="worker threads (output does not depend on it)")
    p.add_argument("--fail-prob", type=float, default=0.0, help="probability that an executed step fails")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--retries", type=int, default=0, help="replanning attempts after a failed execution")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eai", description="Evaluate embodied-agent module outputs on a task suite.")
    sub = ap.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="evaluate one module")
    ev.add_argument("module", choices=sorted(MODULE_NAMES))
    _common(ev)

    pl = sub.add_parser("pipeline", help="goal interpretation feeding a downstream module")
    pl.add_argument("--upstream", default="gt", help="goal-interpretation predictions (or 'gt')")
    pl.add_argument("--downstream", choices=("action-seq", "subgoal"), default="action-seq")
    _common(pl)

    se = sub.add_parser("sensitivity", help="swap predicted operators in one at a time and replan")
    _common(se)

    ex = sub.add_parser("export-pddl", help="write the domain and one PDDL problem per task")
    _common(ex, pred=False)

    rp = sub.add_parser("report", help="convert a JSON report")
    rp.add_argument("--in", dest="infile", required=True, help="JSON report written by eval/pipeline/sensitivity")
    rp.add_argument("--format", choices=("json", "csv"), default="csv")
    rp.add_argument("--out", help="output directory (default: print to stdout)")
    return ap


def _options(args) -> SuiteOptions:
    if not 0.0 <= args.fail_prob <= 1.0:
        raise ValueError("--fail-prob must lie in [0, 1]")
    if args.depth_cap < 1 or args.option_cap < 1 or args.node_budget < 1 or args.parallel < 1:
        raise ValueError("--depth-cap, --option-cap, --node-budget and --parallel must be positive")
    return SuiteOptions(
        domain=args.domain, depth_cap=args.depth_cap, option_cap=args.option_cap,
        node_budget=args.node_budget, parallel=args.parallel, fail_prob=args.fail_prob,
        seed=args.seed, retries=args.retries,
    )


def _tasks(args) -> list[TaskRecord]:
    return load_tasks(args.tasks) if args.tasks else fixture_tasks()


def _predictions(source: str, tasks, module: str):
    if source == "gt":
        return ground_truth_predictions(tasks, module)
    return load_predictions(source, tasks, module)


def _emit(report: EvalReport, args, stem: str | None = None) -> None:
    if args.out:
        path = report.write(args.out, args.format, stem)
        print(path)
    else:
        sys.stdout.write(report.to_json() if args.format == "json" else report.to_csv())


# -- PDDL problem export -------------------------------------------------------------


def _pddl_name(obj) -> str:
    return f"{obj.category}_{obj.instance_id}"


def problem_pddl(task: TaskRecord, domain_name: str, literals) -> str:
    """A PDDL problem: objects typed by category, facts plus property tags as init."""
    objs = "\n    ".join(f"{_pddl_name(o)} - {o.category}" for o in task.universe.sorted_objects())
    init = [f"({p.predicate} {' '.join(_pddl_name(a) for a in p.args)})" for p in sorted(task.initial.facts, key=str)]
    for o in task.universe.sorted_objects():
        init += [f"({tag} {_pddl_name(o)})" for tag in sorted(task.universe.properties[o])]
    goal = []
    for lit in literals:
        atom = f"({lit.prop.predicate} {' '.join(_pddl_name(a) for a in lit.prop.args)})"
        goal.append(atom if lit.positive else f"(not {atom})")
    init_text = "\n    ".join(init)
    goal_text = "\n      ".join(goal)
    return (
        f"(define (problem {task.task_id})\n  (:domain {domain_name})\n"
        f"  (:objects\n    {objs})\n  (:init\n    {init_text})\n"
        f"  (:goal (and\n      {goal_text})))\n"
    )


def export_pddl(tasks: Sequence[TaskRecord], options: SuiteOptions, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    seen_domains = set()
    for t in tasks:
        domain = task_domain(t, options)
        if domain.name not in seen_domains:
            seen_domains.add(domain.name)
            path = out / f"domain-{domain.name}.pddl"
            path.write_text(domain.render(), encoding="utf-8")
            written.append(path)
        problem = t.planning_problem((), domain)
        path = out / f"problem-{t.task_id}.pddl"
        path.write_text(problem_pddl(t, domain.name, problem.goal), encoding="utf-8")
        written.append(path)
    return written


# -- entry point ----------------------------------------------------------------------


def run(args) -> int:
    if args.command == "report":
        report = EvalReport.from_json(Path(args.infile).read_text(encoding="utf-8"))
        if not report.check_aggregates():
            raise TaskError(f"{args.infile}: aggregates do not match the per-task rows")
        _emit(report, args)
        return EXIT_OK
    options = _options(args)
    tasks = _tasks(args)
    if args.command == "eval":
        module = MODULE_NAMES[args.module]
        report = eval_suite(tasks, _predictions(args.pred, tasks, module), module, options)
    elif args.command == "pipeline":
        down = MODULE_NAMES[args.downstream]
        report = pipeline(
            tasks,
            _predictions(args.upstream, tasks, GOAL_INTERPRETATION),
            _predictions(args.pred, tasks, down),
            down,
            options,
        )
    elif args.command == "sensitivity":
        report = sensitivity_suite(tasks, _predictions(args.pred, tasks, TRANSITION_MODELING), options)
    elif args.command == "export-pddl":
        for path in export_pddl(tasks, options, args.out or "pddl"):
            print(path)
        return EXIT_OK
    else:  # pragma: no cover - argparse rejects unknown commands
        raise InternalContractViolation(args.command)
    _emit(report, args)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except InternalContractViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
