"""Task and prediction files: loading, scene building and ground-truth predictions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import goals as G
from .domain import VH_ALIASES, Domain, builtin_domain, data_text, load_domain
from .domain.pddl import PddlError, parse_domain_text
from .executor import action_from_record, execute, parse_raw
from .tmodel import PlanningProblem, extract_relevant_operators
from .world import ObjectRef, Universe, WorldError, WorldState, make_state

GOAL_INTERPRETATION = "goal_interpretation"
ACTION_SEQUENCING = "action_sequencing"
SUBGOAL_DECOMPOSITION = "subgoal_decomposition"
TRANSITION_MODELING = "transition_modeling"
MODULES = (GOAL_INTERPRETATION, ACTION_SEQUENCING, SUBGOAL_DECOMPOSITION, TRANSITION_MODELING)

# fields this package understands; anything else is kept in TaskRecord.extra
KNOWN_FIELDS = frozenset({
    "task_id", "id", "task_name", "natural_language_description", "natural_description",
    "domain", "scene", "vh_goal", "raw_bddl_goal", "goal", "goal_actions", "tl_goal",
    "action_trajectory", "subgoal_plan", "transition_model", "id_aliases",
})


class TaskError(Exception):
    """Malformed task or prediction input."""


def resolve_domain(ref: str) -> Domain:
    """A built-in domain name or a path to a PDDL domain file."""
    path = Path(ref)
    if path.suffix == ".pddl" or path.exists():
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise TaskError(f"cannot read domain file {ref}: {exc}") from exc
        try:
            declared = parse_domain_text(text).types
            # a declared `character` type marks the VirtualHome agent and script-name conventions
            conventions = {"agent_type": "character", "aliases": VH_ALIASES} if "character" in declared else {}
            return load_domain(text, **conventions)
        except PddlError as exc:
            raise TaskError(f"{ref}: {exc}") from exc
    try:
        return builtin_domain(ref)
    except KeyError as exc:
        raise TaskError(str(exc)) from exc


def _object_name(text: str) -> ObjectRef:
    try:
        return ObjectRef.parse(text)
    except ValueError as exc:
        raise TaskError(f"bad object name {text!r}") from exc


@dataclass
class TaskRecord:
    task_id: str
    task_name: str = ""
    description: str = ""
    domain_ref: str = "behavior-symbolic"
    scene: Mapping[str, Any] = field(default_factory=dict)
    vh_goal: Mapping[str, Any] | None = None
    raw_bddl_goal: str | None = None
    goal_literals: tuple[str, ...] | None = None
    goal_actions: tuple[str, ...] = ()
    tl_goal: str | None = None
    action_trajectory: tuple = ()
    subgoal_plan: Any = None
    transition_model: tuple[str, ...] | None = None
    id_aliases: Mapping[str, str] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_json(cls, data: Mapping[str, Any], task_id: str | None = None) -> "TaskRecord":
        tid = task_id if task_id is not None else data.get("task_id", data.get("id"))
        if tid is None:
            raise TaskError("task record without an id")
        goal = data.get("goal")
        if goal is not None and not (isinstance(goal, list) and all(isinstance(g, str) for g in goal)):
            raise TaskError(f"{tid}: 'goal' must be a list of literal strings")
        tm = data.get("transition_model")
        return cls(
            task_id=str(tid),
            task_name=str(data.get("task_name", "")),
            description=str(data.get("natural_language_description", data.get("natural_description", ""))),
            domain_ref=str(data.get("domain", "behavior-symbolic")),
            scene=data.get("scene") or {},
            vh_goal=data.get("vh_goal"),
            raw_bddl_goal=data.get("raw_bddl_goal"),
            goal_literals=tuple(goal) if goal is not None else None,
            goal_actions=tuple(data.get("goal_actions", ())),
            tl_goal=data.get("tl_goal"),
            action_trajectory=tuple(data.get("action_trajectory", ())),
            subgoal_plan=data.get("subgoal_plan"),
            transition_model=tuple(tm) if isinstance(tm, list) else None,
            id_aliases=dict(data.get("id_aliases", {})),
            extra={k: v for k, v in data.items() if k not in KNOWN_FIELDS},
        )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"task_id": self.task_id, "task_name": self.task_name,
                               "natural_language_description": self.description,
                               "domain": self.domain_ref, "scene": self.scene,
                               "action_trajectory": list(self.action_trajectory)}
        optional = {
            "vh_goal": self.vh_goal, "raw_bddl_goal": self.raw_bddl_goal,
            "goal": list(self.goal_literals) if self.goal_literals is not None else None,
            "goal_actions": list(self.goal_actions) or None, "tl_goal": self.tl_goal,
            "subgoal_plan": self.subgoal_plan,
            "transition_model": list(self.transition_model) if self.transition_model is not None else None,
            "id_aliases": dict(self.id_aliases) or None,
        }
        out.update({k: v for k, v in optional.items() if v is not None})
        out.update(self.extra)
        return out

    # -- derived views ---------------------------------------------------------

    @cached_property
    def domain(self) -> Domain:
        return resolve_domain(self.domain_ref)

    @cached_property
    def universe(self) -> Universe:
        objects = self.scene.get("objects", {})
        if isinstance(objects, list):
            objects = {o: [] for o in objects}
        refs = {_object_name(name): tags for name, tags in objects.items()}
        try:
            return Universe(refs, {o: tags for o, tags in refs.items() if tags})
        except WorldError as exc:
            raise TaskError(f"{self.task_id}: {exc}") from exc

    @cached_property
    def initial(self) -> WorldState:
        try:
            return make_state(self.universe, self.scene.get("init", ()))
        except (WorldError, ValueError) as exc:
            raise TaskError(f"{self.task_id}: bad initial state: {exc}") from exc

    def id_names(self) -> dict[int, str]:
        """Numeric id -> category, from the scene objects and the declared alias table."""
        names: dict[int, str] = {}
        ambiguous = set()
        for obj in self.universe.objects:
            i = obj.instance_id
            if names.get(i, obj.category) != obj.category:
                ambiguous.add(i)
            names[i] = obj.category
        for key, value in self.id_aliases.items():
            names[int(key)] = _object_name(value).category if "." in value else value
            ambiguous.discard(int(key))
        if ambiguous:
            raise TaskError(f"{self.task_id}: ids {sorted(ambiguous)} name several objects; declare id_aliases")
        return names

    @cached_property
    def goal(self) -> G.GoalSpec:
        try:
            if self.vh_goal is not None:
                return G.spec_from_records(
                    self.vh_goal.get("goal", ()), self.vh_goal.get("actions", ()), self.id_names()
                )
            if self.raw_bddl_goal is not None:
                return G.spec_from_bddl(self.raw_bddl_goal, self.goal_actions)
            if self.goal_literals is not None:
                return G.spec_from_literals(self.goal_literals, self.goal_actions)
            if self.tl_goal is not None:
                return G.spec_from_ltl(self.tl_goal, self.domain.action_names())
        except (G.GoalError, ValueError, PddlError) as exc:
            raise TaskError(f"{self.task_id}: goal does not parse: {exc}") from exc
        return G.GoalSpec()

    @cached_property
    def trajectory_steps(self) -> tuple[str, ...]:
        return tuple(action_from_record(a) for a in self.action_trajectory)

    def relevant_operators(self, domain: Domain | None = None) -> tuple[str, ...]:
        """Schema names (upper case) of the operators the ground-truth trajectory uses."""
        domain = domain or self.domain
        names = self.transition_model
        if names is None:
            steps = []
            for raw in self.trajectory_steps:
                parsed = parse_raw(raw)
                steps.append(parsed.name if parsed else raw)
            names = tuple(extract_relevant_operators(steps))
        out = set()
        for n in names:
            op = domain.find_schema(n)
            if op is None:
                raise TaskError(f"{self.task_id}: operator {n} not in domain {domain.name}")
            out.add(op.name.upper())
        return tuple(sorted(out))

    def gt_option(self, domain: Domain | None = None) -> G.GoalOption | None:
        """The goal option the ground-truth trajectory achieves (else the first one)."""
        opts = G.expand_options(self.goal, self.universe).options
        if not opts:
            return None
        trace = execute(self.initial, self.trajectory_steps, domain or self.domain)
        if trace.completed:
            traj = trace.trajectory()
            for opt in opts:
                if all(lit.holds(traj.final) for lit in opt.literals) and G.actions_matched(
                    opt.actions, traj.actions
                ):
                    return opt
        return opts[0]

    def planning_problem(self, categories: Sequence[str] = (), domain: Domain | None = None) -> PlanningProblem:
        opt = self.gt_option(domain)
        literals = tuple(sorted(opt.literals, key=str)) if opt is not None else ()
        return PlanningProblem(
            self.task_id, self.initial, literals, self.relevant_operators(domain), tuple(categories)
        )


def load_tasks(source: str | Path | Mapping | Sequence) -> list[TaskRecord]:
    """Tasks from a JSON file or object: a mapping keyed by task id, or a list of records."""
    data = _read_json(source)
    if isinstance(data, Mapping):
        records = [TaskRecord.from_json(v, k) for k, v in data.items()]
    elif isinstance(data, list):
        records = [TaskRecord.from_json(v) for v in data]
    else:
        raise TaskError("task file must hold a JSON object or array")
    seen = set()
    for r in records:
        if r.task_id in seen:
            raise TaskError(f"duplicate task id {r.task_id}")
        seen.add(r.task_id)
    return sorted(records, key=lambda r: r.task_id)


def dump_tasks(tasks: Iterable[TaskRecord]) -> dict[str, Any]:
    out = {}
    for t in tasks:
        rec = t.to_json()
        rec.pop("task_id")
        out[t.task_id] = rec
    return out


def fixture_tasks() -> list[TaskRecord]:
    """The bundled fixture corpus."""
    return load_tasks(json.loads(data_text("tasks.json")))


def _read_json(source):
    if isinstance(source, (str, Path)):
        try:
            return json.loads(Path(source).read_text(encoding="utf-8"))
        except OSError as exc:
            raise TaskError(f"cannot read {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise TaskError(f"{source}: invalid JSON: {exc}") from exc
    return source


# -- predictions -------------------------------------------------------------------


@dataclass(frozen=True)
class PredictionRecord:
    task_id: str
    module: str
    payload: Any

    def to_json(self) -> dict[str, Any]:
        return {"task_id": self.task_id, "module": self.module, "payload": self.payload}


def _check_payload(rec: PredictionRecord) -> None:
    p = rec.payload
    ok = {
        GOAL_INTERPRETATION: isinstance(p, (list, dict)),
        ACTION_SEQUENCING: isinstance(p, list),
        SUBGOAL_DECOMPOSITION: isinstance(p, (str, list)),
        TRANSITION_MODELING: isinstance(p, str),
    }[rec.module]
    if not ok:
        raise TaskError(f"{rec.task_id}: payload type {type(p).__name__} does not fit module {rec.module}")


def load_predictions(
    source: str | Path | Sequence, tasks: Iterable[TaskRecord] | None = None, module: str | None = None
) -> dict[str, PredictionRecord]:
    """Prediction records keyed by task id; tags must be uniform and ids known."""
    data = _read_json(source)
    if not isinstance(data, list):
        raise TaskError("prediction file must hold a JSON array")
    known = {t.task_id for t in tasks} if tasks is not None else None
    out: dict[str, PredictionRecord] = {}
    for item in data:
        try:
            rec = PredictionRecord(str(item["task_id"]), str(item["module"]), item["payload"])
        except (KeyError, TypeError) as exc:
            raise TaskError(f"malformed prediction record {item!r}") from exc
        if rec.module not in MODULES:
            raise TaskError(f"unknown module tag {rec.module!r}")
        if module is not None and rec.module != module:
            raise TaskError(f"prediction for {rec.task_id} is tagged {rec.module}, expected {module}")
        if known is not None and rec.task_id not in known:
            raise TaskError(f"prediction references unknown task {rec.task_id}")
        if rec.task_id in out:
            raise TaskError(f"two predictions for task {rec.task_id}")
        _check_payload(rec)
        out[rec.task_id] = rec
    modules = {r.module for r in out.values()}
    if len(modules) > 1:
        raise TaskError(f"mixed module tags {sorted(modules)}")
    return out


def ground_truth_prediction(task: TaskRecord, module: str) -> PredictionRecord:
    """The task's own annotation, phrased as a prediction for ``module``."""
    if module == GOAL_INTERPRETATION:
        opt = task.gt_option()
        literals = sorted(str(lit) for lit in opt.literals) if opt is not None else []
        actions = [str(a) for a in task.goal.actions]
        payload: Any = {"literals": literals, "actions": actions}
    elif module == ACTION_SEQUENCING:
        payload = list(task.trajectory_steps)
    elif module == SUBGOAL_DECOMPOSITION:
        payload = task.subgoal_plan if task.subgoal_plan is not None else (task.tl_goal or "")
    elif module == TRANSITION_MODELING:
        payload = "\n\n".join(task.domain.schema(n).render() for n in task.relevant_operators())
    else:
        raise TaskError(f"unknown module {module!r}")
    return PredictionRecord(task.task_id, module, payload)


def ground_truth_predictions(tasks: Iterable[TaskRecord], module: str) -> dict[str, PredictionRecord]:
    return {t.task_id: ground_truth_prediction(t, module) for t in tasks}


__all__ = [
    "ACTION_SEQUENCING",
    "GOAL_INTERPRETATION",
    "MODULES",
    "PredictionRecord",
    "SUBGOAL_DECOMPOSITION",
    "TRANSITION_MODELING",
    "TaskError",
    "TaskRecord",
    "dump_tasks",
    "fixture_tasks",
    "ground_truth_prediction",
    "ground_truth_predictions",
    "load_predictions",
    "load_tasks",
    "resolve_domain",
]
