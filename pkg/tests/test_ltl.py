from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FRIDGE_PLAN, FRIDGE_SUBGOALS
from eai import ltl
from eai.executor import execute
from eai.ltl import ActionProp, And, Exists, Implies, Not, Or, StateProp, Then
from eai.world import GroundAction, ObjectRef, Universe, Vocabulary, make_state
from ltl_oracle import random_case, reference_evaluate

VH_ACTIONS = ["LOOKAT", "WATCH", "WALK"]


def test_parse_then_chain():
    f = ltl.parse(
        "ontop(character, chair) then holds_rh(character, mouse) and holds_lh(character, keyboard)"
        " then facing(character, computer)"
    )
    assert isinstance(f, Then) and len(f.children) == 3
    assert isinstance(f.children[0], StateProp)
    assert isinstance(f.children[1], And) and len(f.children[1].children) == 2
    assert f.children[2] == StateProp("facing", ("character", "computer"))


def test_parse_watch_tv_goal():
    text = (
        "(exists x0. ((LOOKAT(x0) or WATCH(x0))) then (ON(television.410) and "
        "PLUGGED_IN(television.410) and FACING(character.65, television.410)))"
    )
    f = ltl.parse(text, VH_ACTIONS)
    assert isinstance(f, Then) and len(f.children) == 2
    ex, goal = f.children
    assert isinstance(ex, Exists) and isinstance(ex.body, Or)
    assert all(isinstance(c, ActionProp) for c in ex.body.children)
    assert isinstance(goal, And) and len(goal.children) == 3
    assert all(isinstance(c, StateProp) for c in goal.children)


def test_precedence_and_binds_tighter_than_or():
    f = ltl.parse("a(x) and b(x) or c(x)")
    assert f == Or((And((StateProp("a", ("x",)), StateProp("b", ("x",)))), StateProp("c", ("x",))))


def test_precedence_implies_and_not():
    f = ltl.parse("not a(x) or b(x) implies c(x)")
    assert isinstance(f, Implies)
    assert isinstance(f.lhs, Or) and isinstance(f.lhs.children[0], Not)


def test_parse_error_reports_position():
    with pytest.raises(ltl.ParseError):
        ltl.parse("a(x) and and b(x)")
    with pytest.raises(ltl.ParseError):
        ltl.parse("then a(x)")


# -- evaluation -------------------------------------------------------------------------

U = Universe([ObjectRef("obj", i) for i in range(3)])


def _traj(facts_per_state):
    states = tuple(make_state(U, fs) for fs in facts_per_state)
    actions = tuple(GroundAction("NOOP", ()) for _ in range(len(states) - 1))
    return ltl.Trajectory(states, actions)


def test_state_prop_true_at_step_zero():
    t = _traj([["a(obj.0)"], []])
    assert ltl.evaluate(ltl.parse("a(obj.0)"), t)


def test_then_ordering_on_four_steps():
    f = ltl.parse("a(obj.0) then b(obj.0)")
    # A only at step 2, B only at step 1: no split puts A before B
    wrong = _traj([[], ["b(obj.0)"], ["a(obj.0)"], []])
    right = _traj([[], ["a(obj.0)"], [], ["b(obj.0)"]])
    assert ltl.evaluate(f, wrong) is False
    assert ltl.evaluate(f, right) is True
    # the brute-force oracle over split points agrees
    for t in (wrong, right):
        manual = any(
            any(t.states[i].holds(p) for i in range(k)) and any(t.states[i].holds(q) for i in range(k, 4))
            for k in range(1, 4)
            for p, q in [(_p("a"), _p("b"))]
        )
        assert ltl.evaluate(f, t) == manual


def _p(name):
    from eai.world import prop

    return prop(name, "obj.0")


def test_fridge_subgoal_formula_on_ground_truth(fridge, behavior):
    trace = execute(fridge.initial, FRIDGE_PLAN, behavior)
    f = ltl.parse(FRIDGE_SUBGOALS, behavior.vocabulary().actions)
    assert ltl.evaluate(f, trace.trajectory())


def test_action_proposition_reads_incoming_action():
    states = (make_state(U, []), make_state(U, []))
    t = ltl.Trajectory(states, (GroundAction("WATCH", (ObjectRef("obj", 1),)),))
    assert ltl.evaluate(ltl.parse("WATCH(obj.1)", ["WATCH"]), t)
    assert not ltl.evaluate(ltl.parse("WATCH(obj.2)", ["WATCH"]), t)
    assert ltl.evaluate(ltl.parse("exists x. (WATCH(x))", ["WATCH"]), t)


def test_negated_then_rejected():
    f = Not(ltl.parse("a(obj.0) then b(obj.0)"))
    with pytest.raises(ltl.ValidationError):
        ltl.evaluate(f, _traj([[], []]))


def test_free_variable_rejected():
    with pytest.raises(ltl.ValidationError):
        ltl.evaluate(ltl.parse("a(y)"), _traj([[]]))


# -- lint ------------------------------------------------------------------------------

VOCAB = Vocabulary({"nextto": 2, "ontop": 2, "open": 1}, {"OPEN": 1})
LU = Universe([ObjectRef("a", 0), ObjectRef("b", 1), ObjectRef("c", 2), ObjectRef("countertop", 84)])


def test_lint_hallucinated_object():
    findings = ltl.lint(ltl.parse("ontop(a.0, kitchen.1)"), VOCAB, LU)
    assert [str(f) for f in findings] == ["Hallucination(object kitchen.1)"]


def test_lint_arity():
    findings = ltl.lint(ltl.parse("nextto(a.0, b.1, c.2)"), VOCAB, LU)
    assert [str(f) for f in findings] == ["ArityError(nextto, 2, 3)"]


def test_lint_clean():
    assert ltl.lint(ltl.parse("open(a.0) then OPEN(b.1)", ["OPEN"]), VOCAB, LU) == []


def test_lint_action_hallucination():
    findings = ltl.lint(ltl.parse("POUR(a.0, b.1)", ["POUR"]), VOCAB, LU)
    assert findings[0].kind == "hallucination" and findings[0].subject == "action"


def test_lint_never_raises_on_bound_variables():
    assert ltl.lint(ltl.parse("forall x. (open(x))"), VOCAB, LU) == []


# -- algebraic properties ---------------------------------------------------------------

atoms_st = st.sampled_from(["a(obj.0)", "b(obj.0)", "a(obj.1)", "b(obj.2)"])
state_st = st.lists(atoms_st, max_size=4)


@settings(max_examples=100, deadline=None)
@given(atoms_st, atoms_st, state_st)
def test_de_morgan_single_step(x, y, facts):
    t = _traj([facts])
    lhs = ltl.parse(f"not ({x} and {y})")
    rhs = ltl.parse(f"not {x} or not {y}")
    assert ltl.evaluate(lhs, t) == ltl.evaluate(rhs, t)


def test_then_chain_flattens():
    f = ltl.parse("a(obj.0) then b(obj.0) then c(obj.0)")
    assert isinstance(f, Then) and len(f.children) == 3
    assert ltl.flatten_then(f) == f.children


@settings(max_examples=150, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["a(obj.0)", "b(obj.0)", "c(obj.0)"]), max_size=3), min_size=1, max_size=6))
def test_flat_and_nested_then_agree(states):
    t = _traj(states)
    a, b, c = (StateProp(n, ("obj.0",)) for n in "abc")
    flat = Then((a, b, c))
    nested = Then((Then((a, b)), c))
    assert ltl.evaluate(flat, t) == ltl.evaluate(nested, t)


def test_round_trip_on_fixture_corpus(tasks):
    texts = []
    for task in tasks.values():
        for field in (task.tl_goal, task.subgoal_plan):
            if isinstance(field, str) and field:
                texts.append((field, task.domain.vocabulary().actions))
            elif isinstance(field, list):
                texts.extend((s, task.domain.vocabulary().actions) for s in field)
    assert len(texts) >= 7
    for text, actions in texts:
        f = ltl.parse(text, actions)
        assert ltl.parse(ltl.render(f), actions) == f


def test_round_trip_random_formulas():
    rng = random.Random(11)
    for _ in range(300):
        f, _t = random_case(rng)
        assert ltl.parse(ltl.render(f), ["PUSH"]) == f


def test_matches_reference_evaluator():
    rng = random.Random(2024)
    for _ in range(300):
        f, t = random_case(rng)
        assert ltl.evaluate(f, t) == reference_evaluate(f, t)


def test_segmentations_cover_all_splits():
    segs = list(ltl.segmentations(4, 2))
    assert segs == [((0, 0), (1, 3)), ((0, 1), (2, 3)), ((0, 2), (3, 3))]
    assert list(ltl.segmentations(2, 3)) == []


def test_lower_case_name_shared_with_an_action_is_a_state():
    f = ltl.parse("open(fridge.97) then OPEN(fridge.97)", ["OPEN"])
    assert f.children[0] == StateProp("open", ("fridge.97",))
    assert isinstance(f.children[1], ActionProp)
    assert ltl.render(f) == "open(fridge.97) then OPEN(fridge.97)"
