"""Object-centric symbolic world state.

A state is a fixed universe of objects plus the set of grounded propositions
that are currently true. Everything absent from the fact set is false.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

_IDENT = re.compile(r"[a-zA-Z_]\w*")
_OBJ = re.compile(r"([a-zA-Z_]\w*)\.([0-9]+)")
# "jar.n.01_1", "bottom_cabinet_no_top_80": BDDL/iGibson spellings
_SYNSET_OBJ = re.compile(r"([a-zA-Z_]\w*?)\.n\.[0-9]+_([0-9]+)")
_UNDERSCORE_OBJ = re.compile(r"([a-zA-Z_]\w*?)_([0-9]+)")

SIZE_ORDER = ("small", "medium", "large")


class WorldError(Exception):
    pass


class UnknownObject(WorldError):
    pass


class UnknownPredicate(WorldError):
    pass


class ConflictingDelta(WorldError):
    pass


class UniverseMismatch(WorldError):
    pass


@dataclass(frozen=True, order=True)
class ObjectRef:
    category: str
    instance_id: int

    def __post_init__(self):
        if not _IDENT.fullmatch(self.category):
            raise ValueError(f"bad object category {self.category!r}")
        if self.instance_id < 0:
            raise ValueError(f"negative instance id for {self.category!r}")

    def __str__(self) -> str:
        return f"{self.category}.{self.instance_id}"

    @classmethod
    def parse(cls, text: str) -> "ObjectRef":
        """Parse ``category.id``; also accepts ``category_id`` and ``cat.n.01_id``."""
        text = text.strip()
        for pattern in (_OBJ, _SYNSET_OBJ, _UNDERSCORE_OBJ):
            m = pattern.fullmatch(text)
            if m:
                return cls(m.group(1), int(m.group(2)))
        raise ValueError(f"not an object reference: {text!r}")


def is_object_text(text: str) -> bool:
    return _OBJ.fullmatch(text) is not None


@dataclass(frozen=True)
class Proposition:
    predicate: str
    args: tuple[ObjectRef, ...]

    def __str__(self) -> str:
        return f"{self.predicate}({', '.join(map(str, self.args))})"

    @classmethod
    def parse(cls, text: str) -> "Proposition":
        m = re.fullmatch(r"\s*([a-zA-Z_]\w*)\s*\((.*)\)\s*", text)
        if not m:
            raise ValueError(f"not a proposition: {text!r}")
        raw = [a for a in (s.strip() for s in m.group(2).split(",")) if a]
        return cls(m.group(1).lower(), tuple(ObjectRef.parse(a) for a in raw))

    def sort_key(self) -> str:
        return str(self)


def prop(predicate: str, *args: str | ObjectRef) -> Proposition:
    """Shorthand: ``prop("open", "fridge.97")``."""
    return Proposition(
        predicate,
        tuple(a if isinstance(a, ObjectRef) else ObjectRef.parse(a) for a in args),
    )


def _derived_tags(tags: frozenset[str]) -> frozenset[str]:
    # graspable iff size <= medium; "big" (holds things inside) iff size >= medium
    sizes = [SIZE_ORDER.index(t) for t in tags if t in SIZE_ORDER]
    if not sizes:
        return tags
    rank = max(sizes)
    extra = set()
    if rank <= 1:
        extra.add("graspable")
    if rank >= 1:
        extra.add("big")
    return tags | extra


class Universe:
    """Fixed, finite set of objects with static property tags."""

    __slots__ = ("objects", "properties", "_by_category", "_hash", "_types")

    def __init__(
        self,
        objects: Iterable[ObjectRef],
        properties: Mapping[ObjectRef, Iterable[str]] | None = None,
    ):
        objs = frozenset(objects)
        props = {}
        for obj, tags in (properties or {}).items():
            if obj not in objs:
                raise UnknownObject(f"property tags for unknown object {obj}")
            props[obj] = _derived_tags(frozenset(tags))
        self.objects: frozenset[ObjectRef] = objs
        self.properties: dict[ObjectRef, frozenset[str]] = {
            o: props.get(o, frozenset()) for o in objs
        }
        by_cat: dict[str, list[ObjectRef]] = {}
        for o in sorted(objs):
            by_cat.setdefault(o.category, []).append(o)
        self._by_category = {k: tuple(v) for k, v in by_cat.items()}
        self._hash = hash((objs, frozenset(self.properties.items())))
        self._types: dict[str, tuple[ObjectRef, ...]] = {}

    def __eq__(self, other):
        if not isinstance(other, Universe):
            return NotImplemented
        return self.objects == other.objects and self.properties == other.properties

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Universe({len(self.objects)} objects)"

    def __contains__(self, obj: ObjectRef) -> bool:
        return obj in self.objects

    def sorted_objects(self) -> tuple[ObjectRef, ...]:
        return self.of_type("object")

    def categories(self) -> frozenset[str]:
        return frozenset(self._by_category)

    def instances(self, category: str) -> tuple[ObjectRef, ...]:
        return self._by_category.get(category, ())

    def has_tag(self, obj: ObjectRef, tag: str) -> bool:
        return tag in self.properties.get(obj, ())

    def is_a(self, obj: ObjectRef, type_name: str) -> bool:
        """Type test used by typed variables: category, property tag, or ``object``."""
        return type_name in ("object", "thing") or obj.category == type_name or self.has_tag(obj, type_name)

    def of_type(self, type_name: str) -> tuple[ObjectRef, ...]:
        hit = self._types.get(type_name)
        if hit is None:
            hit = tuple(o for o in sorted(self.objects) if self.is_a(o, type_name))
            self._types[type_name] = hit
        return hit

    def resolve(self, name: str) -> ObjectRef:
        """Resolve ``cat.id`` or a bare category with exactly one instance."""
        try:
            obj = ObjectRef.parse(name)
        except ValueError:
            inst = self.instances(name)
            if len(inst) == 1:
                return inst[0]
            raise UnknownObject(
                f"{name!r} is not an object (category has {len(inst)} instances)"
            ) from None
        if obj not in self.objects:
            raise UnknownObject(f"object {obj} not in universe")
        return obj


@dataclass(frozen=True)
class Vocabulary:
    """Declared predicate and action arities, plus static property tags."""

    predicates: Mapping[str, int] = field(default_factory=dict)
    actions: Mapping[str, int] = field(default_factory=dict)
    properties: frozenset[str] = frozenset()

    def has_predicate(self, name: str) -> bool:
        return name.lower() in self.predicates

    def has_action(self, name: str) -> bool:
        return action_key(name) in {action_key(a) for a in self.actions}

    def action_arity(self, name: str) -> int | None:
        key = action_key(name)
        for a, n in self.actions.items():
            if action_key(a) == key:
                return n
        return None


def action_key(name: str) -> str:
    """Case- and underscore-insensitive action identity (SWITCHON == switch_on)."""
    return name.upper().replace("_", "")


@dataclass(frozen=True, eq=False)
class WorldState:
    universe: Universe
    facts: frozenset[Proposition]

    def __post_init__(self):
        for p in self.facts:
            for a in p.args:
                if a not in self.universe.objects:
                    raise UnknownObject(f"{a} in fact {p} is not in the universe")

    @classmethod
    def trusted(cls, universe: Universe, facts: frozenset[Proposition]) -> "WorldState":
        """Construct without re-validating every fact (callers checked the delta)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "universe", universe)
        object.__setattr__(obj, "facts", facts)
        return obj

    def __eq__(self, other):
        if not isinstance(other, WorldState):
            return NotImplemented
        return self.facts == other.facts and self.universe == other.universe

    def __hash__(self):
        return hash(self.facts)

    def __repr__(self):
        return f"WorldState({', '.join(self.rendered())})"

    def holds(self, p: Proposition) -> bool:
        if p in self.facts:
            return True
        return len(p.args) == 1 and self.universe.has_tag(p.args[0], p.predicate)

    def rendered(self) -> list[str]:
        return sorted(str(p) for p in self.facts)

    def canonical(self) -> str:
        return "\n".join(self.rendered())


def make_state(
    universe: Universe, facts: Iterable[Proposition | str]
) -> WorldState:
    return WorldState(
        universe,
        frozenset(f if isinstance(f, Proposition) else Proposition.parse(f) for f in facts),
    )


def satisfies(state: WorldState, p: Proposition, vocab: Vocabulary | None = None) -> bool:
    for a in p.args:
        if a not in state.universe.objects:
            raise UnknownObject(f"{a} is not in the universe")
    if vocab is not None and p.predicate not in vocab.predicates and p.predicate not in vocab.properties:
        raise UnknownPredicate(p.predicate)
    return state.holds(p)


def apply_delta(
    state: WorldState,
    add: Iterable[Proposition] = (),
    delete: Iterable[Proposition] = (),
) -> WorldState:
    add, delete = frozenset(add), frozenset(delete)
    both = add & delete
    if both:
        raise ConflictingDelta(", ".join(sorted(map(str, both))))
    for p in add | delete:
        for a in p.args:
            if a not in state.universe.objects:
                raise UnknownObject(f"{a} in {p} is not in the universe")
    return WorldState.trusted(state.universe, (state.facts - delete) | add)


def diff(a: WorldState, b: WorldState) -> tuple[frozenset[Proposition], frozenset[Proposition]]:
    if a.universe != b.universe:
        raise UniverseMismatch("states are over different universes")
    return b.facts - a.facts, a.facts - b.facts


@dataclass(frozen=True)
class GroundAction:
    """An operator instantiated on concrete objects, e.g. ``OPEN(fridge.97)``."""

    name: str
    args: tuple[ObjectRef, ...]

    def __str__(self) -> str:
        return f"{self.name}({', '.join(map(str, self.args))})"

    def sort_key(self) -> tuple:
        return (self.name, tuple(str(a) for a in self.args))
