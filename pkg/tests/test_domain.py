from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eai.domain import (
    BindingError,
    PreconditionViolated,
    affordable,
    applicable,
    apply,
    builtin_domain,
    data_text,
    delta,
    ground,
    ground_actions,
    load_domain,
    make_action,
)
from eai.domain.pddl import Atom, Or, atoms, render_expr
from eai.world import ObjectRef, Universe, apply_delta, diff, make_state, prop


def scene(objects: dict[str, set[str]], facts=()):
    u = Universe(
        [ObjectRef.parse(o) for o in objects],
        {ObjectRef.parse(o): tags for o, tags in objects.items()},
    )
    return make_state(u, facts)


def act(domain, name, *args):
    return make_action(domain, name, [ObjectRef.parse(a) for a in args])


# -- parsing ------------------------------------------------------------------------


def test_walk_towards_block_has_two_params():
    d = load_domain(data_text("triad_ground_truth.pddl"), agent_type="character")
    op = d.schema("walk_towards")
    assert op.arity == 2
    assert [v for v, _ in op.params] == ["?char", "?obj"]
    assert "far_obj" in render_expr(op.precondition)


def test_plug_in_has_two_branch_or():
    d = load_domain(data_text("triad_ground_truth.pddl"), agent_type="character")
    pre = d.schema("plug_in").precondition
    assert isinstance(pre, Or) and len(pre.children) == 2
    preds = [{a.predicate for a in atoms(branch)} for branch in pre.children]
    assert "has_plug" in preds[0] and "has_switch" in preds[1]


def test_empty_domain():
    assert load_domain("(define (domain empty))").schemas == ()
    assert load_domain("").schemas == ()


def test_render_round_trip_builtin():
    for name in ("behavior-symbolic", "virtualhome-core", "triad-ground-truth"):
        d = builtin_domain(name)
        again = load_domain(d.render(), agent_type=d.agent_type)
        assert again.schemas == d.schemas
        assert dict(again.predicates) == dict(d.predicates)


def test_bad_domain_text_raises():
    from eai.domain import PddlError

    with pytest.raises(PddlError):
        load_domain("(define (domain x) (:action a :parameters (?x) :effect (or (p ?x) (q ?x))))")
    with pytest.raises(PddlError):
        load_domain("(define (domain x)")


# -- grounding ----------------------------------------------------------------------


def test_ground_soak(behavior):
    op = behavior.schema("SOAK")
    action, pre, eff = ground(op, {"?o": ObjectRef("rag", 0)})
    assert str(action) == "SOAK(rag.0)"
    text = render_expr(pre)
    assert "(toggled_on ?s)" in text and "?s - sink" in text
    assert "(not (soaked rag.0))" in text
    assert eff == Atom("soaked", ("rag.0",))


def test_ground_open(behavior):
    _, pre, eff = ground(behavior.schema("OPEN"), {"?o": ObjectRef("fridge", 97)})
    text = render_expr(pre)
    assert "(closed fridge.97)" in text
    assert "(not (toggled_on fridge.97))" in text
    assert "(open fridge.97)" in render_expr(eff)


def test_ground_wrong_arity(behavior):
    with pytest.raises(BindingError):
        ground(behavior.schema("OPEN"), {"?o": ObjectRef("fridge", 97), "?x": ObjectRef("rag", 0)})
    s = scene({"fridge.97": {"openable"}})
    with pytest.raises(BindingError):
        applicable(s, make_action(behavior, "OPEN", [ObjectRef("fridge", 97)] * 2), behavior)


# -- applicability --------------------------------------------------------------------


def test_toggle_on_sink_applicable(fridge, behavior):
    assert applicable(fridge.initial, act(behavior, "TOGGLE_ON", "sink.82"), behavior)


def test_open_unopenable_shelf(behavior):
    s = scene({"shelf.12": {"large"}}, ["closed(shelf.12)"])
    a = act(behavior, "OPEN", "shelf.12")
    assert not applicable(s, a, behavior)
    assert not affordable(s, a, behavior)


def test_right_grasp_with_full_hand(behavior):
    s = scene({"rag.0": {"small"}, "cup.1": {"small"}}, ["holding_right(cup.1)"])
    assert not applicable(s, act(behavior, "RIGHT_GRASP", "rag.0"), behavior)
    assert applicable(s, act(behavior, "LEFT_GRASP", "rag.0"), behavior)


# -- apply ---------------------------------------------------------------------------


def test_clean_with_soaked_rag_removes_stain(behavior):
    s = scene(
        {"fridge.97": {"openable", "large"}, "rag.0": {"cleaning_tool", "small"}},
        ["stained(fridge.97)", "soaked(rag.0)", "holding_right(rag.0)", "open(fridge.97)"],
    )
    post = apply(s, act(behavior, "CLEAN", "fridge.97"), behavior)
    assert not post.holds(prop("stained", "fridge.97"))


def test_clean_with_dry_rag_keeps_stain(behavior):
    s = scene(
        {"fridge.97": {"openable", "large"}, "rag.0": {"cleaning_tool", "small"}},
        ["stained(fridge.97)", "dusty(fridge.97)", "holding_right(rag.0)"],
    )
    post = apply(s, act(behavior, "CLEAN", "fridge.97"), behavior)
    assert post.holds(prop("stained", "fridge.97"))
    assert not post.holds(prop("dusty", "fridge.97"))


def test_soak_in_running_sink(behavior):
    s = scene(
        {"rag.0": {"small"}, "sink.82": {"toggleable", "large"}},
        ["toggled_on(sink.82)", "inside(rag.0, sink.82)"],
    )
    post = apply(s, act(behavior, "SOAK", "rag.0"), behavior)
    assert post.holds(prop("soaked", "rag.0"))


def test_toggle_on_twice_raises(behavior):
    s = scene({"light.0": {"toggleable"}}, ["toggled_off(light.0)"])
    a = act(behavior, "TOGGLE_ON", "light.0")
    on = apply(s, a, behavior)
    with pytest.raises(PreconditionViolated):
        apply(on, a, behavior)


HAPPY_PATHS = [
    # (objects, initial facts, action, expected added, expected removed)
    ({"box.0": {"openable"}}, ["closed(box.0)"], ("OPEN", "box.0"), {"open(box.0)"}, {"closed(box.0)"}),
    ({"box.0": {"openable"}}, ["open(box.0)"], ("CLOSE", "box.0"), {"closed(box.0)"}, {"open(box.0)"}),
    ({"lamp.0": {"toggleable"}}, ["toggled_off(lamp.0)"], ("TOGGLE_ON", "lamp.0"),
     {"toggled_on(lamp.0)"}, {"toggled_off(lamp.0)"}),
    ({"lamp.0": {"toggleable"}}, ["toggled_on(lamp.0)"], ("TOGGLE_OFF", "lamp.0"),
     {"toggled_off(lamp.0)"}, {"toggled_on(lamp.0)"}),
    ({"rag.0": {"small"}, "sink.1": {"toggleable"}}, ["toggled_on(sink.1)", "next_to(rag.0, sink.1)"],
     ("SOAK", "rag.0"), {"soaked(rag.0)"}, set()),
    ({"rag.0": {"small"}}, ["soaked(rag.0)"], ("DRY", "rag.0"), set(), {"soaked(rag.0)"}),
    ({"table.0": {"large"}, "brush.0": {"cleaning_tool", "small"}}, ["dusty(table.0)"],
     ("CLEAN", "table.0"), set(), {"dusty(table.0)"}),
    ({"apple.0": {"sliceable", "small"}, "knife.0": {"slicer", "small"}}, [], ("SLICE", "apple.0"),
     {"sliced(apple.0)"}, set()),
    ({"chicken.0": {"small"}, "fridge.0": {"openable", "large"}}, ["inside(chicken.0, fridge.0)", "open(fridge.0)"],
     ("FREEZE", "chicken.0"), {"frozen(chicken.0)"}, set()),
    ({"chicken.0": {"small"}}, ["frozen(chicken.0)"], ("UNFREEZE", "chicken.0"), set(), {"frozen(chicken.0)"}),
    ({"egg.0": {"small"}, "pan.0": {"medium"}}, ["ontop(egg.0, pan.0)"], ("COOK", "egg.0"), {"cooked(egg.0)"}, set()),
    ({"cup.0": {"small"}, "table.0": {"large"}}, ["ontop(cup.0, table.0)"], ("RIGHT_GRASP", "cup.0"),
     {"holding_right(cup.0)"}, {"ontop(cup.0, table.0)"}),
    ({"cup.0": {"small"}, "table.0": {"large"}}, ["holding_left(cup.0)"], ("LEFT_PLACE_ONTOP", "table.0"),
     {"ontop(cup.0, table.0)"}, {"holding_left(cup.0)"}),
    ({"cup.0": {"small"}, "bin.0": {"large"}}, ["holding_right(cup.0)"], ("RIGHT_PLACE_INSIDE", "bin.0"),
     {"inside(cup.0, bin.0)"}, {"holding_right(cup.0)"}),
    ({"cup.0": {"small"}, "floor.0": set()}, ["holding_right(cup.0)"], ("RIGHT_RELEASE", "cup.0"),
     {"onfloor(cup.0, floor.0)"}, {"holding_right(cup.0)"}),
]


@pytest.mark.parametrize("objects, facts, step, added, removed", HAPPY_PATHS, ids=[h[2][0] for h in HAPPY_PATHS])
def test_behavior_happy_paths(behavior, objects, facts, step, added, removed):
    s = scene(objects, facts)
    post = apply(s, act(behavior, *step), behavior)
    got_add, got_del = diff(s, post)
    assert {str(p) for p in got_add} == added
    assert {str(p) for p in got_del} == removed


def test_effect_predicates_are_declared():
    for name in ("behavior-symbolic", "virtualhome-core"):
        d = builtin_domain(name)
        for op in d.schemas:
            for a in atoms(op.effect):
                if a.predicate != "=":
                    assert a.predicate in d.predicates, (name, op.name, a.predicate)


def test_switch_only_device_can_be_plugged_in_and_switched_on():
    d = builtin_domain("triad-ground-truth")
    s = scene(
        {"character.65": set(), "television.410": {"has_switch"}},
        ["next_to(character.65, television.410)", "off(television.410)", "plugged_out(television.410)"],
    )
    s = apply(s, act(d, "PLUG_IN", "television.410"), d)
    s = apply(s, act(d, "SWITCH_ON", "television.410"), d)
    assert s.holds(prop("on", "television.410"))


# -- properties -------------------------------------------------------------------------


def _random_walk(task, domain, seed, length):
    rng = random.Random(seed)
    state = task.initial
    acts = sorted(ground_actions(domain, state.universe), key=lambda a: a.sort_key())
    out = []
    for _ in range(length):
        ok = [a for a in acts if applicable(state, a, domain)]
        if not ok:
            break
        a = rng.choice(ok)
        out.append((state, a))
        state = apply(state, a, domain)
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["cleaning_fridge_0", "cleaning_high_chair_0", "bottling_fruit_0"]))
def test_frame_property_and_determinism(tasks, behavior, seed, task_id):
    for state, a in _random_walk(tasks[task_id], behavior, seed, 6):
        add, delete = delta(state, a, behavior)
        post = apply(state, a, behavior)
        changed_add, changed_del = diff(state, post)
        assert changed_add <= add and changed_del <= delete
        for p in state.facts - delete:
            assert p in post.facts
        assert post == apply_delta(state, add, delete)
        again = apply(state, a, behavior)
        assert again == post and hash(again) == hash(post)
