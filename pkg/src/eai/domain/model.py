"""Operator semantics: binding, applicability, effects, affordance checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from ..world import (
    GroundAction,
    ObjectRef,
    Proposition,
    Universe,
    Vocabulary,
    WorldState,
    action_key,
    apply_delta,
)
from .pddl import (
    And,
    Atom,
    Exists,
    Expr,
    Forall,
    Not,
    OperatorSchema,
    Or,
    PddlError,
    VocabularyError,
    When,
    atoms,
    check_vocabulary,
    parse_domain_text,
    render_expr,
    substitute,
)

Env = Mapping[str, ObjectRef]


class DomainError(Exception):
    pass


class BindingError(DomainError):
    pass


class UnknownAction(DomainError):
    pass


class PreconditionViolated(DomainError):
    def __init__(self, action: GroundAction, failed: Sequence[Expr]):
        self.action = action
        self.failed = tuple(failed)
        shown = ", ".join(render_expr(e) for e in self.failed)
        super().__init__(f"{action} is not applicable: {shown}")


@dataclass(frozen=True)
class Domain:
    name: str
    predicates: Mapping[str, int]
    schemas: tuple[OperatorSchema, ...]
    types: Mapping[str, str] = field(default_factory=dict)
    # parameters of this type are filled with the (unique) agent object
    agent_type: str | None = None
    auto_navigate: bool = False
    navigate_action: str | None = None
    adjacency_predicate: str | None = None
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        by_key: dict[str, OperatorSchema] = {}
        for op in self.schemas:
            k = action_key(op.name)
            if k in by_key:
                raise PddlError(f"duplicate action {op.name!r}")
            by_key[k] = op
            if not _effect_ok(op.effect):
                raise PddlError(f"{op.name}: disjunction outside a 'when' condition in effect")
        for alias, target in self.aliases.items():
            if action_key(target) in by_key:
                by_key.setdefault(action_key(alias), by_key[action_key(target)])
        used, changed = set(), set()
        for op in self.schemas:
            used |= {a.predicate for a in atoms(op.precondition)}
            for e in _effect_literals(op.effect):
                changed.add(e.predicate)
        static = (set(self.predicates) | used) - changed - {"="}
        object.__setattr__(self, "_by_key", by_key)
        object.__setattr__(self, "static_predicates", frozenset(static))

    # -- lookup ---------------------------------------------------------------

    def find_schema(self, name: str) -> OperatorSchema | None:
        return self._by_key.get(action_key(name))

    def schema(self, name: str) -> OperatorSchema:
        op = self.find_schema(name)
        if op is None:
            raise UnknownAction(name)
        return op

    def user_params(self, op: OperatorSchema) -> tuple[tuple[str, str], ...]:
        return tuple(p for p in op.params if p[1] != self.agent_type)

    def action_names(self) -> list[str]:
        return [op.name for op in self.schemas]

    def vocabulary(self, properties: Iterable[str] = ()) -> Vocabulary:
        actions = {op.name.upper(): len(self.user_params(op)) for op in self.schemas}
        for alias, target in self.aliases.items():
            op = self.find_schema(target)
            if op is not None:
                actions.setdefault(alias.upper(), len(self.user_params(op)))
        return Vocabulary(
            dict(self.predicates), actions, frozenset(properties) | self.static_predicates
        )

    def with_schemas(self, schemas: Iterable[OperatorSchema]) -> "Domain":
        """Copy of this domain with some schemas swapped in (matched by name)."""
        new = {action_key(op.name): op for op in schemas}
        merged = tuple(new.pop(action_key(op.name), op) for op in self.schemas) + tuple(new.values())
        preds = dict(self.predicates)
        for op in merged:
            for a in itertools.chain(atoms(op.precondition), atoms(op.effect)):
                if a.predicate != "=":
                    preds.setdefault(a.predicate, len(a.args))
        return replace(self, schemas=merged, predicates=preds)

    def render(self) -> str:
        preds = "\n    ".join(
            f"({p}{''.join(f' ?a{i}' for i in range(n))})" for p, n in sorted(self.predicates.items())
        )
        body = "\n\n".join(op.render() for op in self.schemas)
        types = ""
        if self.types:
            decl = " ".join(f"{t} - {parent}" for t, parent in sorted(self.types.items()))
            types = f"  (:types {decl})\n"
        return f"(define (domain {self.name})\n{types}  (:predicates\n    {preds})\n\n{body}\n)\n"


def _effect_ok(e: Expr) -> bool:
    if isinstance(e, (Or, Exists)):
        return False
    if isinstance(e, When):
        return _effect_ok(e.consequence)
    if isinstance(e, Not):
        return isinstance(e.child, Atom)
    if isinstance(e, Forall):
        return _effect_ok(e.body)
    if isinstance(e, And):
        return all(_effect_ok(c) for c in e.children)
    return True


def _effect_literals(e: Expr) -> Iterable[Atom]:
    if isinstance(e, Atom):
        yield e
    elif isinstance(e, Not):
        yield from _effect_literals(e.child)
    elif isinstance(e, When):
        yield from _effect_literals(e.consequence)
    elif isinstance(e, (Forall, Exists)):
        yield from _effect_literals(e.body)
    elif isinstance(e, (And, Or)):
        for c in e.children:
            yield from _effect_literals(c)


def infer_predicates(schemas: Iterable[OperatorSchema]) -> dict[str, int]:
    preds: dict[str, int] = {}
    for op in schemas:
        for a in itertools.chain(atoms(op.precondition), atoms(op.effect)):
            if a.predicate == "=":
                continue
            if preds.setdefault(a.predicate, len(a.args)) != len(a.args):
                raise VocabularyError(f"predicate {a.predicate!r} used with inconsistent arity")
    return preds


def load_domain(text: str, **conventions) -> Domain:
    """Parse a domain file (or bare ``:action`` blocks) into a :class:`Domain`."""
    src = parse_domain_text(text)
    if src.predicates is None:
        preds = infer_predicates(src.schemas)
    else:
        preds = src.predicates
        problems = check_vocabulary(src.schemas, preds)
        if problems:
            raise VocabularyError("; ".join(problems))
    return Domain(src.name, preds, tuple(src.schemas), src.types, **conventions)


# -- binding ------------------------------------------------------------------


def _agent(domain: Domain, universe: Universe) -> ObjectRef:
    found = universe.of_type(domain.agent_type)
    if len(found) != 1:
        raise BindingError(f"expected exactly one {domain.agent_type!r} object, found {len(found)}")
    return found[0]


def bind(
    domain: Domain, op: OperatorSchema, args: Sequence[ObjectRef], universe: Universe
) -> dict[str, ObjectRef]:
    """Map the user-visible arguments (agent filled implicitly) onto schema variables."""
    user = domain.user_params(op)
    if len(args) != len(user):
        raise BindingError(f"{op.name} takes {len(user)} arguments, got {len(args)}")
    env: dict[str, ObjectRef] = {}
    it = iter(args)
    for var, typ in op.params:
        obj = _agent(domain, universe) if typ == domain.agent_type else next(it)
        if obj not in universe:
            raise BindingError(f"{obj} is not in the universe")
        if not universe.is_a(obj, typ):
            raise BindingError(f"{obj} is not of type {typ!r} for {var} in {op.name}")
        env[var] = obj
    return env


def ground(
    op: OperatorSchema, binding: Mapping[str, ObjectRef], universe: Universe | None = None
) -> tuple[GroundAction, Expr, Expr]:
    """Substitute a full binding into a schema. Quantifiers are left for evaluation time."""
    names = [v for v, _ in op.params]
    if set(binding) != set(names):
        raise BindingError(f"{op.name} binds {names}, got {sorted(binding)}")
    if universe is not None:
        for var, typ in op.params:
            if not universe.is_a(binding[var], typ):
                raise BindingError(f"{binding[var]} is not of type {typ!r}")
    text = {v: str(o) for v, o in binding.items()}
    action = GroundAction(op.name.upper(), tuple(binding[v] for v in names))
    return action, substitute(op.precondition, text), substitute(op.effect, text)


def make_action(domain: Domain, name: str, args: Sequence[ObjectRef]) -> GroundAction:
    return GroundAction(domain.schema(name).name.upper(), tuple(args))


def _context(state: WorldState, action: GroundAction, domain: Domain):
    op = domain.schema(action.name)
    return op, bind(domain, op, action.args, state.universe)


# -- evaluation -----------------------------------------------------------------


def _obj(arg: str, env: Env, universe: Universe) -> ObjectRef:
    if arg.startswith("?"):
        try:
            return env[arg]
        except KeyError:
            raise BindingError(f"unbound variable {arg}") from None
    return universe.resolve(arg)


def _atom_prop(a: Atom, env: Env, universe: Universe) -> Proposition:
    return Proposition(a.predicate, tuple(_obj(x, env, universe) for x in a.args))


def _bindings(variables, universe: Universe, env: Env):
    domains = [universe.of_type(t) for _, t in variables]
    names = [v for v, _ in variables]
    for combo in itertools.product(*domains):
        inner = dict(env)
        inner.update(zip(names, combo))
        yield inner


def holds(e: Expr, state: WorldState, env: Env | None = None) -> bool:
    """Closed-world truth of a condition. ``when`` in a condition reads as implication."""
    env = env or {}
    u = state.universe
    if isinstance(e, Atom):
        if e.predicate == "=":
            return _obj(e.args[0], env, u) == _obj(e.args[1], env, u)
        return state.holds(_atom_prop(e, env, u))
    if isinstance(e, Not):
        return not holds(e.child, state, env)
    if isinstance(e, And):
        return all(holds(c, state, env) for c in e.children)
    if isinstance(e, Or):
        return any(holds(c, state, env) for c in e.children)
    if isinstance(e, When):
        return not holds(e.condition, state, env) or holds(e.consequence, state, env)
    if isinstance(e, Forall):
        return all(holds(e.body, state, b) for b in _bindings(e.variables, u, env))
    return any(holds(e.body, state, b) for b in _bindings(e.variables, u, env))


def relaxed_holds(e: Expr, state: WorldState, env: Env, static: frozenset[str], neg: bool = False) -> bool:
    """Evaluate with every fluent literal assumed satisfiable.

    Only static predicates (object properties), equality and types are checked,
    so a False result means no reachable state could make the condition true.
    """
    u = state.universe
    if isinstance(e, Atom):
        if e.predicate != "=" and e.predicate not in static:
            return True
        value = holds(e, state, env)
        return not value if neg else value
    if isinstance(e, Not):
        return relaxed_holds(e.child, state, env, static, not neg)
    if isinstance(e, When):
        # c -> q  ==  (not c) or q
        return relaxed_holds(Or((Not(e.condition), e.consequence)), state, env, static, neg)
    if isinstance(e, (And, Or)):
        conj = isinstance(e, And) != neg
        parts = (relaxed_holds(c, state, env, static, neg) for c in e.children)
        return all(parts) if conj else any(parts)
    universal = isinstance(e, Forall) != neg
    parts = (relaxed_holds(e.body, state, b, static, neg) for b in _bindings(e.variables, u, env))
    return all(parts) if universal else any(parts)


def _ground_leaf(e: Expr, env: Env) -> Expr:
    return substitute(e, {v: str(o) for v, o in env.items()})


def unsatisfied(e: Expr, state: WorldState, env: Env | None = None) -> list[Expr]:
    """Failing leaves of a condition, following the Or branch with the fewest failures.

    Quantified and conditional sub-conditions are reported whole. Leaves are ground
    (variables substituted) so they can be re-evaluated against other states.
    """
    env = env or {}
    if holds(e, state, env):
        return []
    if isinstance(e, And):
        out: list[Expr] = []
        for c in e.children:
            out.extend(unsatisfied(c, state, env))
        return out
    if isinstance(e, Or) and e.children:
        return min((unsatisfied(c, state, env) for c in e.children), key=len)
    return [_ground_leaf(e, env)]


def effect_delta(e: Expr, state: WorldState, env: Env | None = None) -> tuple[frozenset, frozenset]:
    """Resolve an effect against the pre-state into (add, delete) sets; add wins."""
    add: set[Proposition] = set()
    delete: set[Proposition] = set()
    u = state.universe

    def visit(x: Expr, env: Env):
        if isinstance(x, Atom):
            add.add(_atom_prop(x, env, u))
        elif isinstance(x, Not):
            if not isinstance(x.child, Atom):
                raise PddlError(f"negated non-atom in effect: {render_expr(x)}")
            delete.add(_atom_prop(x.child, env, u))
        elif isinstance(x, And):
            for c in x.children:
                visit(c, env)
        elif isinstance(x, When):
            if holds(x.condition, state, env):
                visit(x.consequence, env)
        elif isinstance(x, Forall):
            for b in _bindings(x.variables, u, env):
                visit(x.body, b)
        else:
            raise PddlError(f"unsupported effect form: {render_expr(x)}")

    visit(e, env or {})
    return frozenset(add), frozenset(delete - add)


# -- public operations ------------------------------------------------------------


def applicable(state: WorldState, action: GroundAction, domain: Domain) -> bool:
    op, env = _context(state, action, domain)
    return holds(op.precondition, state, env)


def failed_preconditions(state: WorldState, action: GroundAction, domain: Domain) -> list[Expr]:
    op, env = _context(state, action, domain)
    return unsatisfied(op.precondition, state, env)


def affordable(state: WorldState, action: GroundAction, domain: Domain) -> bool:
    op, env = _context(state, action, domain)
    return relaxed_holds(op.precondition, state, env, domain.static_predicates)


def delta(state: WorldState, action: GroundAction, domain: Domain) -> tuple[frozenset, frozenset]:
    op, env = _context(state, action, domain)
    return effect_delta(op.effect, state, env)


def redundant(state: WorldState, action: GroundAction, domain: Domain) -> bool:
    """True when the resolved effect would not change anything it mentions."""
    add, delete = delta(state, action, domain)
    if not add and not delete:
        return False
    return all(state.holds(p) for p in add) and not any(p in state.facts for p in delete)


def apply(state: WorldState, action: GroundAction, domain: Domain) -> WorldState:
    op, env = _context(state, action, domain)
    failed = unsatisfied(op.precondition, state, env)
    if failed:
        raise PreconditionViolated(action, failed)
    add, delete = effect_delta(op.effect, state, env)
    return apply_delta(state, add, delete)


def apply_unchecked(state: WorldState, action: GroundAction, domain: Domain) -> WorldState:
    add, delete = delta(state, action, domain)
    return apply_delta(state, add, delete)


def ground_actions(domain: Domain, universe: Universe, names: Iterable[str] | None = None) -> list[GroundAction]:
    """Every type-compatible instantiation of the selected schemas."""
    out = []
    schemas = domain.schemas if names is None else [domain.schema(n) for n in names]
    for op in schemas:
        params = domain.user_params(op)
        for combo in itertools.product(*(universe.of_type(t) for _, t in params)):
            out.append(GroundAction(op.name.upper(), combo))
    return out
