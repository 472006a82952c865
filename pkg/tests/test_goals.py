from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eai import ltl
from eai.executor import execute
from eai.goals import (
    ACTION,
    GoalSpec,
    check_satisfaction,
    expand_options,
    interpret_f1,
    partial_success,
    set_f1,
    spec_from_bddl,
    spec_from_literals,
    spec_from_ltl,
)
from eai.world import GroundAction, ObjectRef, Universe, make_state


def _universe(**counts):
    objs = [ObjectRef(cat, i) for cat, n in counts.items() for i in range(1, n + 1)]
    return Universe(objs)


def _bijections_brute_force(jars, apples):
    """All n-subsets of the n x n pair grid that use every jar and apple once."""
    grid = [(j, a) for j in jars for a in apples]
    out = set()
    for subset in itertools.combinations(grid, len(jars)):
        if len({j for j, _ in subset}) == len(jars) and len({a for _, a in subset}) == len(apples):
            out.add(frozenset(f"inside({a}, {j})" for j, a in subset))
    return out


FORPAIRS = (
    "(forpairs (?jar.n.01 - jar.n.01) (?apple.n.01 - apple.n.01) (inside ?apple.n.01 ?jar.n.01))"
)


@pytest.mark.parametrize("n, expected", [(2, 2), (3, 6), (4, 24)])
def test_forpairs_counts(n, expected):
    u = _universe(jar=n, apple=n)
    opts = expand_options(spec_from_bddl(FORPAIRS), u).options
    assert len(opts) == expected == math.factorial(n)
    brute = _bijections_brute_force(u.instances("jar"), u.instances("apple"))
    assert {frozenset(map(str, o.literals)) for o in opts} == brute


@pytest.mark.parametrize("m", range(1, 6))
def test_forn_counts(m):
    u = _universe(apple=m)
    for k in range(0, m + 1):
        spec = spec_from_bddl(f"(forn ({k}) (?a - apple) (sliced ?a))")
        opts = expand_options(spec, u).options
        brute = sum(1 for mask in range(2 ** m) if bin(mask).count("1") == k)
        assert len(opts) == brute == math.comb(m, k)


def test_unquantified_conjunction_single_option():
    u = _universe(box=2)
    spec = spec_from_literals(["open(box.1)", "not open(box.2)"])
    opts = expand_options(spec, u).options
    assert len(opts) == 1
    assert opts[0].render() == ["not open(box.2)", "open(box.1)"]


def test_exists_gives_one_option_per_object():
    u = _universe(box=3)
    opts = expand_options(spec_from_bddl("(exists (?b - box) (open ?b))"), u).options
    assert [o.render() for o in opts] == [["open(box.1)"], ["open(box.2)"], ["open(box.3)"]]


def test_forall_over_empty_category_is_vacuous():
    u = _universe(box=1)
    spec = spec_from_bddl("(forall (?j - jar) (open ?j))")
    opts = expand_options(spec, u)
    assert any("EmptyDomain" in w for w in opts.warnings)
    t = ltl.Trajectory((make_state(u, []),))
    ok, br = check_satisfaction(spec, t)
    assert ok and any("EmptyDomain" in w for w in br.warnings)


def test_cap_overflow_falls_back_to_direct_evaluation():
    u = _universe(jar=4, apple=4)
    spec = spec_from_bddl(FORPAIRS)
    facts = [f"inside(apple.{i}, jar.{5 - i})" for i in range(1, 5)]
    t = ltl.Trajectory((make_state(u, facts),))
    opts = expand_options(spec, u, cap=5)
    assert opts.overflow
    ok, br = check_satisfaction(spec, t, cap=5)
    assert ok and br.overflow
    assert check_satisfaction(spec, ltl.Trajectory((make_state(u, facts[:3]),)), cap=5)[0] is False


def test_cap_must_be_positive():
    with pytest.raises(ValueError):
        expand_options(GoalSpec(), _universe(box=1), cap=0)


# -- satisfaction ----------------------------------------------------------------------


def test_watch_tv_ground_truth_satisfied(tasks, vh):
    task = tasks["1057_1"]
    trace = execute(task.initial, task.trajectory_steps, vh)
    assert trace.completed
    ok, br = check_satisfaction(task.goal, trace.trajectory())
    assert ok and br.actions_ok


def test_missing_goal_action_unsatisfied(tasks, vh):
    task = tasks["1057_1"]
    steps = [s for s in task.trajectory_steps if "WATCH" not in s]
    trace = execute(task.initial, steps, vh)
    assert trace.completed
    ok, br = check_satisfaction(task.goal, trace.trajectory())
    assert not ok
    assert br.actions_ok is False
    assert br.unsatisfied(ACTION) == ["action sequence"]
    assert all(all(v.values()) for v in br.literals.values())


def test_empty_goal_vacuous():
    t = ltl.Trajectory((make_state(_universe(box=1), []),))
    assert check_satisfaction(GoalSpec(), t)[0] is True
    assert partial_success(GoalSpec(), t) == 1.0


def test_action_goals_use_subsequence_semantics():
    u = _universe(tv=1)
    spec = spec_from_ltl("LOOKAT(tv.1) then WATCH(tv.1) then on(tv.1)", ["LOOKAT", "WATCH"])
    s = make_state(u, ["on(tv.1)"])
    tv = (ObjectRef("tv", 1),)
    acts = (GroundAction("LOOKAT", tv), GroundAction("WALK", tv), GroundAction("WATCH", tv))
    t = ltl.Trajectory((s,) * 4, acts)
    assert check_satisfaction(spec, t)[0]
    reversed_t = ltl.Trajectory((s,) * 3, (GroundAction("WATCH", tv), GroundAction("LOOKAT", tv)))
    assert not check_satisfaction(spec, reversed_t)[0]


def test_partial_success_two_of_four():
    u = _universe(box=4)
    spec = spec_from_literals([f"open(box.{i})" for i in range(1, 5)])
    t = ltl.Trajectory((make_state(u, ["open(box.1)", "open(box.3)"]),))
    # oracle: evaluate each literal against the final state
    expected = sum(f"open(box.{i})" in t.final.rendered() for i in range(1, 5)) / 4
    assert partial_success(spec, t) == expected == 0.5


def test_partial_success_takes_best_option():
    u = _universe(box=3)
    spec = spec_from_bddl("(or (and (open box.1) (open box.2)) (and (open box.3) (closed box.1)))")
    t = ltl.Trajectory((make_state(u, ["open(box.3)", "closed(box.1)"]),))
    scores = []
    for opt in expand_options(spec, u).options:
        scores.append(sum(lit.holds(t.final) for lit in opt.literals) / len(opt.literals))
    assert sorted(scores) == [0.0, 1.0]
    assert partial_success(spec, t) == max(scores) == 1.0


def test_partial_success_counts_action_sequence_as_one_element():
    u = _universe(tv=1)
    spec = spec_from_ltl("WATCH(tv.1) then on(tv.1) and plugged_in(tv.1)", ["WATCH"])
    t = ltl.Trajectory((make_state(u, ["on(tv.1)"]),))
    assert partial_success(spec, t) == pytest.approx(1 / 3)


# -- interpretation F1 -------------------------------------------------------------------


def test_interpret_f1_identity():
    u = _universe(box=2, table=1)
    gt = spec_from_literals(["open(box.1)", "ontop(box.2, table.1)"])
    score = interpret_f1(["open(box.1)", "ontop(box.2, table.1)"], gt, u)
    assert score.overall.f1 == score.overall.precision == score.overall.recall == 1.0
    assert set(score.per_category) == {"state", "relation"}
    assert all(p.f1 == 1.0 for p in score.per_category.values())


def test_interpret_f1_two_thirds():
    u = _universe(box=4)
    gt = spec_from_literals(["open(box.1)", "open(box.2)", "open(box.4)"])
    score = interpret_f1(["open(box.1)", "open(box.2)", "open(box.3)"], gt, u)
    for value in (score.overall.precision, score.overall.recall, score.overall.f1):
        assert value == pytest.approx(2 / 3, abs=1e-9)


def test_intermediate_state_is_a_false_positive():
    u = _universe(freezer=1, chicken=1)
    gt = spec_from_literals(["inside(chicken.1, freezer.1)"])
    score = interpret_f1(["inside(chicken.1, freezer.1)", "open(freezer.1)"], gt, u)
    assert score.false_positives == ["open(freezer.1)"]
    assert score.overall.precision == 0.5 and score.overall.recall == 1.0


def test_hallucinated_items_excluded_and_reported():
    u = _universe(box=1)
    gt = spec_from_literals(["open(box.1)"])
    score = interpret_f1(["open(box.1)", "open(kitchen.1)"], gt, u)
    assert score.hallucinated == ["open(kitchen.1)"]
    assert score.overall.f1 == 1.0


def test_interpret_f1_takes_best_option():
    u = _universe(jar=2, apple=2)
    gt = spec_from_bddl(FORPAIRS)
    score = interpret_f1(["inside(apple.1, jar.2)", "inside(apple.2, jar.1)"], gt, u)
    assert score.overall.f1 == 1.0


def test_action_goal_alternation_scored_as_one_element(tasks):
    task = tasks["1057_1"]
    lits = [str(x) for x in task.gt_option().literals]
    score = interpret_f1(lits, task.goal, task.universe, ["WATCH"])
    assert score.per_category["action"].f1 == 1.0
    missing = interpret_f1(lits, task.goal, task.universe, [])
    assert missing.per_category["action"].fn == 1


# -- properties --------------------------------------------------------------------------

ITEMS = st.frozensets(st.sampled_from("abcdefgh"), max_size=6)


@given(ITEMS, ITEMS)
def test_set_f1_bounds(x, y):
    assert 0.0 <= set_f1(x, y) <= 1.0
    assert set_f1(x, x) == 1.0
    if x:
        assert set_f1(x, set()) == 0.0
    assert set_f1(x, y) == set_f1(y, x)


BOX_U = _universe(box=4)
LITS = [f"open(box.{i})" for i in range(1, 5)] + [f"dusty(box.{i})" for i in range(1, 5)]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(LITS), min_size=1, max_size=5, unique=True),
       st.frozensets(st.sampled_from(LITS)), st.sampled_from(LITS))
def test_partial_success_monotone_and_consistent(goal, facts, extra):
    spec = spec_from_literals(goal)
    before = ltl.Trajectory((make_state(BOX_U, facts),))
    after = ltl.Trajectory((make_state(BOX_U, facts | {extra}),))
    assert partial_success(spec, after) >= partial_success(spec, before)
    for t in (before, after):
        assert check_satisfaction(spec, t)[0] == (partial_success(spec, t) == 1.0)
