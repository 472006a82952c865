"""Operator schemas (a PDDL subset) and the built-in household domains."""

from __future__ import annotations

from dataclasses import replace
from functools import lru_cache
from importlib import resources

from .model import (
    BindingError,
    Domain,
    DomainError,
    PreconditionViolated,
    UnknownAction,
    affordable,
    applicable,
    apply,
    apply_unchecked,
    bind,
    delta,
    effect_delta,
    failed_preconditions,
    ground,
    ground_actions,
    holds,
    load_domain,
    make_action,
    redundant,
    relaxed_holds,
    unsatisfied,
)
from .pddl import OperatorSchema, ParseError, PddlError, VocabularyError, parse_action, render_expr

VH_ALIASES = {
    "walk": "walk_towards",
    "walktowards": "walk_towards",
    "run": "walk_towards",
    "switchon": "switch_on",
    "switchoff": "switch_off",
    "plugin": "plug_in",
    "plugout": "plug_out",
    "turnto": "turn_to",
    "lookat": "look_at",
    "puton": "put_on",
    "putback": "put_on",
    "putin": "put_in",
    "putobjback": "put_on",
    "standup": "standup",
}

BUILTIN = {
    "behavior-symbolic": (
        "behavior_symbolic.pddl",
        dict(auto_navigate=True, navigate_action="navigate_to", adjacency_predicate="agent_near"),
    ),
    "virtualhome-core": ("virtualhome_core.pddl", dict(agent_type="character", aliases=VH_ALIASES)),
    "triad-ground-truth": ("triad_ground_truth.pddl", dict(agent_type="character")),
    "triad-predicted": ("triad_predicted.pddl", dict(agent_type="character")),
    "triad-mixed": ("triad_mixed.pddl", dict(agent_type="character")),
}


def data_text(filename: str) -> str:
    return resources.files("eai.data").joinpath(filename).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def builtin_domain(name: str) -> Domain:
    try:
        filename, conventions = BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown built-in domain {name!r}; choose from {sorted(BUILTIN)}") from None
    domain = load_domain(data_text(filename), **conventions)
    # bare :action listings carry no domain name of their own
    return domain if domain.name != "unnamed" else replace(domain, name=name)


__all__ = [
    "BUILTIN",
    "VH_ALIASES",
    "BindingError",
    "Domain",
    "DomainError",
    "OperatorSchema",
    "ParseError",
    "PddlError",
    "PreconditionViolated",
    "UnknownAction",
    "VocabularyError",
    "affordable",
    "applicable",
    "apply",
    "apply_unchecked",
    "bind",
    "builtin_domain",
    "data_text",
    "delta",
    "effect_delta",
    "failed_preconditions",
    "ground",
    "ground_actions",
    "holds",
    "load_domain",
    "make_action",
    "parse_action",
    "redundant",
    "relaxed_holds",
    "render_expr",
    "unsatisfied",
]
