"""Evaluation reports: per-task rows, aggregates recomputed from them, JSON and CSV output."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .tasks import ACTION_SEQUENCING, GOAL_INTERPRETATION, SUBGOAL_DECOMPOSITION, TRANSITION_MODELING

PIPELINE = "pipeline"
SENSITIVITY = "sensitivity"

# error kinds in the column order of the results tables
ERROR_COLUMNS = (
    ("parsing", "Parsing"),
    ("hallucination", "Hallucination"),
    ("arg_number", "Predicate-Arg Num"),
    ("wrong_order", "Wrong Order"),
    ("missing_step", "Missing Step"),
    ("affordance", "Affordance"),
    ("additional_step", "Additional Step"),
)
GRAMMAR_ERRORS = ("parsing", "hallucination", "arg_number")
RUNTIME_ERRORS = ("wrong_order", "missing_step", "affordance", "additional_step")
GOAL_CATEGORIES = ("state", "relation", "action")
CLAUSE_PARTS = ("pre", "eff")
DECIMALS = 4


def rounded(obj: Any) -> Any:
    """Round every float to the report precision (recursively)."""
    if isinstance(obj, float):
        return round(obj, DECIMALS) + 0.0  # + 0.0 folds -0.0
    if isinstance(obj, Mapping):
        return {str(k): rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    return obj


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _prf(tp: int, fp: int, fn: int) -> dict[str, float | int]:
    p = tp / (tp + fp) if tp + fp else (1.0 if not fn else 0.0)
    r = tp / (tp + fn) if tp + fn else (1.0 if not fp else 0.0)
    d = 2 * tp + fp + fn
    return {"tp": tp, "fp": fp, "fn": fn, "precision": p, "recall": r, "f1": 2 * tp / d if d else 1.0}


# -- aggregation ---------------------------------------------------------------------


def _sequence_aggregates(rows: Sequence[Mapping]) -> dict:
    n = len(rows)
    out: dict[str, Any] = {"n_tasks": n}
    if not n:
        return out
    out["task_sr"] = sum(bool(r["success"]) for r in rows) / n
    out["execution_sr"] = sum(bool(r["executable"]) for r in rows) / n
    rates = {k: sum(r.get("error") == k for r in rows) / n for k, _ in ERROR_COLUMNS}
    out["error_rates"] = rates
    out["grammar_error_rate"] = sum(rates[k] for k in GRAMMAR_ERRORS)
    out["runtime_error_rate"] = sum(rates[k] for k in RUNTIME_ERRORS)
    out["partial_success"] = _mean([r["partial"] for r in rows])
    out["missing_predictions"] = sum(bool(r.get("missing_prediction")) for r in rows)
    out["injected_failures"] = sum(bool(r.get("injected")) for r in rows)
    if all("success_gt" in r for r in rows):
        out["task_sr_gt"] = sum(bool(r["success_gt"]) for r in rows) / n
    return out


def _goal_aggregates(rows: Sequence[Mapping]) -> dict:
    out: dict[str, Any] = {"n_tasks": len(rows)}
    if not rows:
        return out
    per = {}
    for cat in GOAL_CATEGORIES:
        tp, fp, fn = (sum(r[f"{cat}_{k}"] for r in rows) for k in ("tp", "fp", "fn"))
        if tp or fp or fn:
            per[cat] = _prf(tp, fp, fn)
    out["per_category"] = per
    out["overall"] = _prf(*(sum(p[k] for p in per.values()) for k in ("tp", "fp", "fn")))
    out["hallucinated_items"] = sum(len(r.get("hallucinated", ())) for r in rows)
    out["missing_predictions"] = sum(bool(r.get("missing_prediction")) for r in rows)
    return out


def _transition_aggregates(rows: Sequence[Mapping]) -> dict:
    out: dict[str, Any] = {"n_tasks": len(rows)}
    if not rows:
        return out
    sums = {f"{p}_{k}": sum(r[f"{p}_{k}"] for r in rows) for p in CLAUSE_PARTS for k in ("tp", "fp", "fn")}
    out["precondition"] = _prf(sums["pre_tp"], sums["pre_fp"], sums["pre_fn"])
    out["effect"] = _prf(sums["eff_tp"], sums["eff_fp"], sums["eff_fn"])
    out["overall"] = _prf(*(sums[f"pre_{k}"] + sums[f"eff_{k}"] for k in ("tp", "fp", "fn")))
    out["planner_sr"] = sum(bool(r["planner_found"]) for r in rows) / len(rows)
    out["gt_planner_sr"] = sum(bool(r["gt_planner_found"]) for r in rows) / len(rows)
    by_cat: dict[str, list[bool]] = {}
    for r in rows:
        for c in r["categories"] or ["uncategorized"]:
            by_cat.setdefault(c, []).append(bool(r["planner_found"]))
    out["planner_sr_by_category"] = {c: sum(v) / len(v) for c, v in sorted(by_cat.items())}
    # category-summed overall: a task counts once in each of its categories
    flat = [x for v in by_cat.values() for x in v]
    out["planner_sr_category_summed"] = sum(flat) / len(flat)
    out["missing_predictions"] = sum(bool(r.get("missing_prediction")) for r in rows)
    return out


def _sensitivity_aggregates(rows: Sequence[Mapping]) -> dict:
    used = [r for r in rows if r["overall"] is not None]
    return {"n_actions": len(rows), "n_used": len(used), "mean_overall": _mean([r["overall"] for r in used])}


AGGREGATORS = {
    GOAL_INTERPRETATION: _goal_aggregates,
    ACTION_SEQUENCING: _sequence_aggregates,
    SUBGOAL_DECOMPOSITION: _sequence_aggregates,
    TRANSITION_MODELING: _transition_aggregates,
    PIPELINE: _sequence_aggregates,
    SENSITIVITY: _sensitivity_aggregates,
}


def aggregate(module: str, rows: Sequence[Mapping]) -> dict:
    """Aggregates from (already rounded) rows; the same function re-derives them from a file."""
    return rounded(AGGREGATORS[module](rows))


# -- report ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    module: str
    rows: list[dict]
    meta: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)

    @classmethod
    def build(cls, module: str, rows: Iterable[Mapping], meta: Mapping | None = None) -> "EvalReport":
        key = "action" if module == SENSITIVITY else "task_id"
        ordered = sorted((rounded(dict(r)) for r in rows), key=lambda r: r[key])
        return cls(module, ordered, rounded(dict(meta or {})), aggregate(module, ordered))

    def check_aggregates(self) -> bool:
        return aggregate(self.module, self.rows) == self.aggregates

    def to_dict(self) -> dict:
        return {"module": self.module, "meta": self.meta, "rows": self.rows, "aggregates": self.aggregates}

    def to_json(self) -> str:
        return json.dumps(rounded(self.to_dict()), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        return cls(data["module"], data["rows"], data.get("meta", {}), data.get("aggregates", {}))

    def to_csv(self) -> str:
        header, body, total = CSV_LAYOUTS[self.module](self)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        if self.rows:
            w.writerow(total)
        return buf.getvalue()

    def write(self, out_dir: str | Path, fmt: str, stem: str | None = None) -> Path:
        if fmt not in ("json", "csv"):
            raise ValueError(f"unknown report format {fmt!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{stem or self.module}.{fmt}"
        path.write_text(self.to_json() if fmt == "json" else self.to_csv(), encoding="utf-8")
        return path


# -- CSV layouts (percentages on a 0-100 scale, one decimal) ------------------------------


def pct(x: float | None) -> str:
    return "" if x is None else f"{100 * x:.1f}"


def _flag(b: bool) -> str:
    return pct(1.0 if b else 0.0)


def _sequence_csv(rep: EvalReport):
    pipeline = rep.module == PIPELINE
    header = ["Task", "Task SR", "Execution SR"] + [label for _, label in ERROR_COLUMNS]
    if pipeline:
        header.append("Task SR (GT goal)")
    body = []
    for r in rep.rows:
        row = [r["task_id"], _flag(r["success"]), _flag(r["executable"])]
        row += [_flag(r.get("error") == k) for k, _ in ERROR_COLUMNS]
        if pipeline:
            row.append(_flag(r["success_gt"]))
        body.append(row)
    a = rep.aggregates
    total = ["ALL", pct(a.get("task_sr")), pct(a.get("execution_sr"))]
    total += [pct(a.get("error_rates", {}).get(k)) for k, _ in ERROR_COLUMNS]
    if pipeline:
        total.append(pct(a.get("task_sr_gt")))
    return header, body, total


def _goal_csv(rep: EvalReport):
    header = ["Task"]
    for cat in GOAL_CATEGORIES:
        header += [f"{cat.title()} TP", f"{cat.title()} FP", f"{cat.title()} FN", f"{cat.title()} F1"]
    header += ["Precision", "Recall", "F1"]
    body = []
    for r in rep.rows:
        row = [r["task_id"]]
        for cat in GOAL_CATEGORIES:
            c = [r[f"{cat}_{k}"] for k in ("tp", "fp", "fn")]
            row += c + [pct(_prf(*c)["f1"]) if any(c) else ""]
        o = _prf(*(sum(r[f"{cat}_{k}"] for cat in GOAL_CATEGORIES) for k in ("tp", "fp", "fn")))
        row += [pct(o["precision"]), pct(o["recall"]), pct(o["f1"])]
        body.append(row)
    a = rep.aggregates
    total = ["ALL"]
    for cat in GOAL_CATEGORIES:
        p = a.get("per_category", {}).get(cat)
        total += [p["tp"], p["fp"], p["fn"], pct(p["f1"])] if p else [0, 0, 0, ""]
    o = a.get("overall", {})
    total += [pct(o.get("precision")), pct(o.get("recall")), pct(o.get("f1"))]
    return header, body, total


def _transition_csv(rep: EvalReport):
    header = ["Task", "Categories", "Precondition TP", "Precondition FP", "Precondition FN",
              "Effect TP", "Effect FP", "Effect FN", "Precondition F1", "Effect F1", "Logic F1",
              "Planner SR"]
    body = []
    for r in rep.rows:
        pre = [r[f"pre_{k}"] for k in ("tp", "fp", "fn")]
        eff = [r[f"eff_{k}"] for k in ("tp", "fp", "fn")]
        both = [x + y for x, y in zip(pre, eff)]
        body.append([r["task_id"], ";".join(r["categories"])] + pre + eff + [
            pct(_prf(*pre)["f1"]), pct(_prf(*eff)["f1"]), pct(_prf(*both)["f1"]), _flag(r["planner_found"])])
    a = rep.aggregates
    total = ["ALL", ""]
    if rep.rows:
        total += [a["precondition"][k] for k in ("tp", "fp", "fn")] + [a["effect"][k] for k in ("tp", "fp", "fn")]
        total += [pct(a["precondition"]["f1"]), pct(a["effect"]["f1"]), pct(a["overall"]["f1"]), pct(a["planner_sr"])]
    return header, body, total


def _sensitivity_csv(rep: EvalReport):
    cats = sorted({c for r in rep.rows for c in r["per_category"]})
    header = ["Action", "Overall"] + cats
    body = [[r["action"], pct(r["overall"])] + [pct(r["per_category"].get(c)) for c in cats] for r in rep.rows]
    total = ["ALL", pct(rep.aggregates.get("mean_overall"))] + [""] * len(cats)
    return header, body, total


CSV_LAYOUTS = {
    GOAL_INTERPRETATION: _goal_csv,
    ACTION_SEQUENCING: _sequence_csv,
    SUBGOAL_DECOMPOSITION: _sequence_csv,
    TRANSITION_MODELING: _transition_csv,
    PIPELINE: _sequence_csv,
    SENSITIVITY: _sensitivity_csv,
}


def read_csv(text: str) -> tuple[list[str], list[list[str]], list[str] | None]:
    """Split an emitted CSV into header, data rows and the trailing ALL row (if any)."""
    rows = list(csv.reader(io.StringIO(text)))
    header, rest = rows[0], rows[1:]
    if rest and rest[-1][0] == "ALL":
        return header, rest[:-1], rest[-1]
    return header, rest, None


__all__ = [
    "AGGREGATORS",
    "ERROR_COLUMNS",
    "EvalReport",
    "PIPELINE",
    "SENSITIVITY",
    "aggregate",
    "pct",
    "read_csv",
    "rounded",
]
