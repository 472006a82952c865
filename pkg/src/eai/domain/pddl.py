"""PDDL subset: s-expression reader, condition/effect AST, domain loader.

Supported connectives are ``and``, ``or``, ``not``, ``when``, ``forall``,
``exists`` (plus ``imply``, rewritten to ``or``/``not``) and equality ``=``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from ..world import Vocabulary


class PddlError(Exception):
    pass


class ParseError(PddlError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        super().__init__(f"{message} (line {line}, column {col})")


class VocabularyError(PddlError):
    pass


# -- s-expressions -----------------------------------------------------------


class Sym(str):
    """A symbol with its source location."""

    line: int = 0
    col: int = 0


class SList(list):
    line: int = 0
    col: int = 0


_TOKEN = re.compile(r"\s+|;[^\n]*|(\()|(\))|([^\s();]+)")


def read_sexprs(text: str) -> list:
    stack: list[SList] = [SList()]
    pos = 0
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def where(offset: int) -> tuple[int, int]:
        lo, hi = 0, len(line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - line_starts[lo] + 1

    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the pattern matches any character
            raise ParseError("unreadable input", *where(pos))
        if m.group(1):
            lst = SList()
            lst.line, lst.col = where(pos)
            stack.append(lst)
        elif m.group(2):
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", *where(pos))
            done = stack.pop()
            stack[-1].append(done)
        elif m.group(3):
            sym = Sym(m.group(3).lower())
            sym.line, sym.col = where(pos)
            stack[-1].append(sym)
        pos = m.end()
    if len(stack) != 1:
        open_ = stack[-1]
        raise ParseError("unclosed '('", open_.line, open_.col)
    return list(stack[0])


def _loc(x) -> tuple[int, int]:
    return getattr(x, "line", 0), getattr(x, "col", 0)


# -- condition / effect AST --------------------------------------------------


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Not:
    child: "Expr"


@dataclass(frozen=True)
class And:
    children: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Expr", ...]


@dataclass(frozen=True)
class When:
    condition: "Expr"
    consequence: "Expr"


@dataclass(frozen=True)
class Forall:
    variables: tuple[tuple[str, str], ...]
    body: "Expr"


@dataclass(frozen=True)
class Exists:
    variables: tuple[tuple[str, str], ...]
    body: "Expr"


Expr = Union[Atom, Not, And, Or, When, Forall, Exists]
TRUE = And(())


def sub_exprs(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Atom):
        return ()
    if isinstance(e, Not):
        return (e.child,)
    if isinstance(e, When):
        return (e.condition, e.consequence)
    if isinstance(e, (Forall, Exists)):
        return (e.body,)
    return e.children


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in sub_exprs(e):
        yield from walk(c)


def atoms(e: Expr) -> Iterator[Atom]:
    return (x for x in walk(e) if isinstance(x, Atom))


def free_variables(e: Expr, bound: frozenset[str] = frozenset()) -> set[str]:
    if isinstance(e, Atom):
        return {a for a in e.args if a.startswith("?") and a not in bound}
    if isinstance(e, (Forall, Exists)):
        return free_variables(e.body, bound | {v for v, _ in e.variables})
    out: set[str] = set()
    for c in sub_exprs(e):
        out |= free_variables(c, bound)
    return out


def when_depth(e: Expr) -> int:
    if isinstance(e, When):
        return 1 + max(when_depth(e.condition), when_depth(e.consequence))
    return max((when_depth(c) for c in sub_exprs(e)), default=0)


def substitute(e: Expr, mapping: dict[str, str]) -> Expr:
    """Replace variables by constants, respecting quantifier shadowing."""
    if not mapping:
        return e
    if isinstance(e, Atom):
        return Atom(e.predicate, tuple(mapping.get(a, a) for a in e.args))
    if isinstance(e, Not):
        return Not(substitute(e.child, mapping))
    if isinstance(e, And):
        return And(tuple(substitute(c, mapping) for c in e.children))
    if isinstance(e, Or):
        return Or(tuple(substitute(c, mapping) for c in e.children))
    if isinstance(e, When):
        return When(substitute(e.condition, mapping), substitute(e.consequence, mapping))
    inner = {k: v for k, v in mapping.items() if k not in {n for n, _ in e.variables}}
    return type(e)(e.variables, substitute(e.body, inner))


def parse_typed_list(items: list) -> tuple[tuple[str, str], ...]:
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        tok = items[i]
        if isinstance(tok, list):
            raise ParseError("unexpected list in typed variable list", *_loc(tok))
        if tok == "-":
            if i + 1 >= len(items) or isinstance(items[i + 1], list):
                raise ParseError("'-' must be followed by a type name", *_loc(tok))
            type_tok = items[i + 1]
            if not pending:
                raise ParseError("type without variables", *_loc(tok))
            out.extend((v, str(type_tok)) for v in pending)
            pending = []
            i += 2
            continue
        pending.append(str(tok))
        i += 1
    out.extend((v, "object") for v in pending)
    return tuple(out)


def parse_expr(sx) -> Expr:
    if not isinstance(sx, list):
        raise ParseError(f"expected a parenthesized expression, got {sx!r}", *_loc(sx))
    if not sx:
        return TRUE
    head = sx[0]
    if isinstance(head, list):
        raise ParseError("expression head must be a symbol", *_loc(head))
    rest = sx[1:]
    if head == "and":
        return And(tuple(parse_expr(c) for c in rest))
    if head == "or":
        return Or(tuple(parse_expr(c) for c in rest))
    if head == "not":
        if len(rest) != 1:
            raise ParseError("'not' takes one argument", *_loc(head))
        return Not(parse_expr(rest[0]))
    if head == "imply":
        if len(rest) != 2:
            raise ParseError("'imply' takes two arguments", *_loc(head))
        return Or((Not(parse_expr(rest[0])), parse_expr(rest[1])))
    if head == "when":
        if len(rest) != 2:
            raise ParseError("'when' takes a condition and a consequence", *_loc(head))
        return When(parse_expr(rest[0]), parse_expr(rest[1]))
    if head in ("forall", "exists"):
        if len(rest) != 2 or not isinstance(rest[0], list):
            raise ParseError(f"'{head}' takes a variable list and a body", *_loc(head))
        variables = parse_typed_list(rest[0])
        body = parse_expr(rest[1])
        return Forall(variables, body) if head == "forall" else Exists(variables, body)
    for a in rest:
        if isinstance(a, list):
            raise ParseError(f"nested expression inside atom {head!r}", *_loc(a))
    return Atom(str(head), tuple(str(a) for a in rest))


def render_expr(e: Expr, indent: int = 0) -> str:
    if isinstance(e, Atom):
        return f"({' '.join((e.predicate, *e.args))})"
    if isinstance(e, Not):
        return f"(not {render_expr(e.child)})"
    if isinstance(e, (And, Or)):
        word = "and" if isinstance(e, And) else "or"
        return f"({' '.join((word, *(render_expr(c) for c in e.children)))})"
    if isinstance(e, When):
        return f"(when {render_expr(e.condition)} {render_expr(e.consequence)})"
    word = "forall" if isinstance(e, Forall) else "exists"
    vs = " ".join(f"{v} - {t}" for v, t in e.variables)
    return f"({word} ({vs}) {render_expr(e.body)})"


# -- operators and domains ---------------------------------------------------


@dataclass(frozen=True)
class OperatorSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    precondition: Expr = TRUE
    effect: Expr = TRUE
    warnings: tuple[str, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)

    def render(self) -> str:
        ps = " ".join(f"{v} - {t}" for v, t in self.params)
        return (
            f"(:action {self.name}\n"
            f"  :parameters ({ps})\n"
            f"  :precondition {render_expr(self.precondition)}\n"
            f"  :effect {render_expr(self.effect)}\n)"
        )


def _check_schema(op: OperatorSchema) -> OperatorSchema:
    warnings = list(op.warnings)
    params = {v for v, _ in op.params}
    pre_free = free_variables(op.precondition, frozenset(params))
    pre = op.precondition
    if pre_free:
        # unbound precondition variables are read as existentially quantified
        warnings.append(f"unbound precondition variables {sorted(pre_free)} read as existential")
        pre = Exists(tuple((v, "object") for v in sorted(pre_free)), pre)
    eff_free = free_variables(op.effect, frozenset(params))
    if eff_free:
        raise VocabularyError(f"{op.name}: unbound effect variables {sorted(eff_free)}")
    if when_depth(op.effect) > 2:
        warnings.append("'when' nested more than one level deep")
    return OperatorSchema(op.name, op.params, pre, op.effect, tuple(warnings))


def parse_action(sx) -> OperatorSchema:
    if len(sx) < 2 or isinstance(sx[1], list):
        raise ParseError(":action needs a name", *_loc(sx))
    name = str(sx[1])
    fields: dict[str, object] = {}
    i = 2
    while i < len(sx):
        key = sx[i]
        if isinstance(key, list) or not key.startswith(":"):
            raise ParseError(f"expected an :action field, got {key!r}", *_loc(key))
        if i + 1 >= len(sx):
            raise ParseError(f"field {key} has no value", *_loc(key))
        fields[str(key)] = sx[i + 1]
        i += 2
    unknown = set(fields) - {":parameters", ":precondition", ":effect"}
    if unknown:
        raise ParseError(f"unsupported action fields {sorted(unknown)}", *_loc(sx))
    params_sx = fields.get(":parameters", [])
    if not isinstance(params_sx, list):
        raise ParseError(":parameters must be a list", *_loc(params_sx))
    return _check_schema(
        OperatorSchema(
            name,
            parse_typed_list(params_sx),
            parse_expr(fields[":precondition"]) if ":precondition" in fields else TRUE,
            parse_expr(fields[":effect"]) if ":effect" in fields else TRUE,
        )
    )


@dataclass
class DomainSource:
    name: str = "unnamed"
    predicates: dict[str, int] | None = None
    types: dict[str, str] = field(default_factory=dict)
    schemas: list[OperatorSchema] = field(default_factory=list)


def parse_domain_text(text: str) -> DomainSource:
    """Read a ``(define (domain ...))`` form or a bare sequence of ``:action`` blocks."""
    forms = read_sexprs(text)
    src = DomainSource()
    if len(forms) == 1 and isinstance(forms[0], list) and forms[0] and forms[0][0] == "define":
        body = forms[0][1:]
    else:
        body = forms
    for item in body:
        if not isinstance(item, list) or not item:
            raise ParseError(f"unexpected token {item!r}", *_loc(item))
        head = item[0]
        if head == "domain" and len(item) == 2:
            src.name = str(item[1])
        elif head == ":requirements":
            continue
        elif head == ":types":
            for v, t in parse_typed_list(item[1:]):
                src.types[v] = t
        elif head == ":predicates":
            src.predicates = {}
            for decl in item[1:]:
                if not isinstance(decl, list) or not decl:
                    raise ParseError("bad predicate declaration", *_loc(decl))
                src.predicates[str(decl[0])] = len(parse_typed_list(decl[1:]))
        elif head == ":action":
            src.schemas.append(parse_action(item))
        else:
            raise ParseError(f"unsupported domain section {head!r}", *_loc(item))
    return src


def check_vocabulary(schemas: list[OperatorSchema], predicates: dict[str, int]) -> list[str]:
    """Undeclared predicates or wrong arities used by the schemas."""
    problems = []
    for op in schemas:
        for expr in (op.precondition, op.effect):
            for a in atoms(expr):
                if a.predicate == "=":
                    continue
                arity = predicates.get(a.predicate)
                if arity is None:
                    problems.append(f"{op.name}: undeclared predicate {a.predicate!r}")
                elif arity != len(a.args):
                    problems.append(
                        f"{op.name}: {a.predicate} takes {arity} arguments, got {len(a.args)}"
                    )
    return sorted(set(problems))


def vocabulary_of(predicates: dict[str, int], schemas, static: frozenset[str]) -> Vocabulary:
    return Vocabulary(
        dict(predicates), {op.name: op.arity for op in schemas}, frozenset(static)
    )
