"""Typed first-order predicate expressions over symbolic scene entities.

Expressions are immutable trees of atoms, boolean connectives, and
quantifiers.  Atom arguments may be entity names, bound variables, or
UPPERCASE placeholders that get substituted during grounding.  Evaluation
expands quantifiers over the entity table (worlds are small), so no
theorem proving is involved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional


class LogicError(Exception):
    """Raised for malformed types, entities, or expressions."""


# Predicate schemas: name -> argument kinds. "entity" args must resolve to an
# entity (or a bound variable / placeholder); "type" args to a registered type.
PREDICATE_SCHEMAS: dict[str, tuple[str, ...]] = {
    "on_top": ("entity", "entity"),
    "in": ("entity", "entity"),
    "holding": ("entity",),
    "robot_at": ("entity",),
    "opened": ("entity",),
    "closed": ("entity",),
    "is_type": ("entity", "type"),
}

_IDENT_RE = re.compile(r"^[a-z][a-z0-9_]*$")
_PLACEHOLDER_RE = re.compile(r"^[A-Z][A-Z0-9_]*$")


def is_placeholder(token: str) -> bool:
    return bool(_PLACEHOLDER_RE.match(token))


class TypeTable:
    """Forest of entity types; subtype queries walk the parent chain."""

    def __init__(self) -> None:
        self._parent: dict[str, Optional[str]] = {}

    def register(self, name: str, parent: Optional[str] = None) -> None:
        if not _IDENT_RE.match(name):
            raise LogicError(f"bad type identifier: {name!r}")
        if parent is not None and parent not in self._parent:
            raise LogicError(f"unknown parent type: {parent!r}")
        if name in self._parent:
            if self._parent[name] != parent:
                raise LogicError(f"type {name!r} re-registered with a different parent")
            return
        # registering with an already-known parent cannot create a cycle
        self._parent[name] = parent

    def __contains__(self, name: str) -> bool:
        return name in self._parent

    def names(self) -> list[str]:
        return list(self._parent)

    def is_subtype(self, t: str, ancestor: str) -> bool:
        """True iff ``ancestor`` lies on ``t``'s parent chain (reflexive)."""
        if t not in self._parent:
            raise LogicError(f"unknown type: {t!r}")
        if ancestor not in self._parent:
            raise LogicError(f"unknown type: {ancestor!r}")
        cur: Optional[str] = t
        while cur is not None:
            if cur == ancestor:
                return True
            cur = self._parent[cur]
        return False


@dataclass(frozen=True)
class Entity:
    name: str
    entity_type: str


class EntityTable:
    """Entities of a problem, indexed by name, with type-extension queries."""

    def __init__(self, types: TypeTable, entities: Iterable[Entity] = ()) -> None:
        self.types = types
        self._by_name: dict[str, Entity] = {}
        self._extension_cache: dict[str, list[Entity]] = {}
        for e in entities:
            self.add(e)

    def add(self, entity: Entity) -> None:
        if entity.entity_type not in self.types:
            raise LogicError(f"entity {entity.name!r} has unknown type {entity.entity_type!r}")
        if entity.name in self._by_name:
            raise LogicError(f"duplicate entity name: {entity.name!r}")
        self._by_name[entity.name] = entity
        self._extension_cache.clear()

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def get(self, name: str) -> Entity:
        try:
            return self._by_name[name]
        except KeyError:
            raise LogicError(f"unknown entity: {name!r}") from None

    def names(self) -> list[str]:
        return list(self._by_name)

    def of_type(self, type_name: str) -> list[Entity]:
        """Entities whose type is ``type_name`` or a subtype of it."""
        cached = self._extension_cache.get(type_name)
        if cached is not None:
            return cached
        if type_name not in self.types:
            raise LogicError(f"unknown type: {type_name!r}")
        out = [
            e for e in self._by_name.values() if self.types.is_subtype(e.entity_type, type_name)
        ]
        self._extension_cache[type_name] = out
        return out


@dataclass(frozen=True)
class GroundPredicate:
    predicate_name: str
    args: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.predicate_name not in PREDICATE_SCHEMAS:
            raise LogicError(f"unknown predicate: {self.predicate_name!r}")
        schema = PREDICATE_SCHEMAS[self.predicate_name]
        if len(self.args) != len(schema):
            raise LogicError(
                f"{self.predicate_name} expects {len(schema)} args, got {len(self.args)}"
            )

    def __str__(self) -> str:
        return f"({self.predicate_name} {' '.join(self.args)})"


# --- Expression nodes -------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    def free_placeholders(self) -> set[str]:
        raise NotImplementedError


@dataclass(frozen=True)
class Atom(Expr):
    pred: GroundPredicate

    def free_placeholders(self) -> set[str]:
        return {a for a in self.pred.args if is_placeholder(a)}


@dataclass(frozen=True)
class And(Expr):
    children: tuple[Expr, ...]

    def free_placeholders(self) -> set[str]:
        return set().union(*(c.free_placeholders() for c in self.children)) if self.children else set()


@dataclass(frozen=True)
class Or(Expr):
    children: tuple[Expr, ...]

    def free_placeholders(self) -> set[str]:
        return set().union(*(c.free_placeholders() for c in self.children)) if self.children else set()


@dataclass(frozen=True)
class Not(Expr):
    child: Expr

    def free_placeholders(self) -> set[str]:
        return self.child.free_placeholders()


@dataclass(frozen=True)
class Exists(Expr):
    var: str
    var_type: str
    body: Expr

    def free_placeholders(self) -> set[str]:
        out = self.body.free_placeholders()
        if is_placeholder(self.var_type):
            out = out | {self.var_type}
        return out


@dataclass(frozen=True)
class ForAll(Expr):
    var: str
    var_type: str
    body: Expr

    def free_placeholders(self) -> set[str]:
        out = self.body.free_placeholders()
        if is_placeholder(self.var_type):
            out = out | {self.var_type}
        return out


# --- Grounding --------------------------------------------------------------

Substitution = Mapping[str, str]


def ground(expr: Expr, sub: Substitution, check: Optional[Callable[[str, str], None]] = None) -> Expr:
    """Substitute placeholder identifiers with entity/type names.

    ``check(placeholder, value)`` may raise on type-constraint violations.
    The returned expression has no free placeholders; structure is unchanged.
    """
    missing = expr.free_placeholders() - set(sub)
    if missing:
        raise LogicError(f"missing placeholder bindings: {sorted(missing)}")
    if check is not None:
        for ph in expr.free_placeholders():
            check(ph, sub[ph])

    def repl(token: str) -> str:
        return sub[token] if is_placeholder(token) else token

    def walk(e: Expr) -> Expr:
        if isinstance(e, Atom):
            return Atom(GroundPredicate(e.pred.predicate_name, tuple(repl(a) for a in e.pred.args)))
        if isinstance(e, And):
            return And(tuple(walk(c) for c in e.children))
        if isinstance(e, Or):
            return Or(tuple(walk(c) for c in e.children))
        if isinstance(e, Not):
            return Not(walk(e.child))
        if isinstance(e, (Exists, ForAll)):
            body = walk(e.body)
            return type(e)(e.var, repl(e.var_type), body)
        raise LogicError(f"unknown expression node: {e!r}")

    return walk(expr)


# --- Evaluation -------------------------------------------------------------

Valuation = Callable[[GroundPredicate], bool]


def evaluate(expr: Expr, valuation: Valuation, entities: EntityTable) -> bool:
    """Standard first-order semantics; quantifiers range over the entity table
    (subtypes included).  ``is_type`` atoms are resolved against the type table,
    every other atom through ``valuation``."""

    def ev(e: Expr, env: dict[str, str]) -> bool:
        if isinstance(e, Atom):
            args = []
            for a in e.pred.args:
                if a in env:
                    args.append(env[a])
                elif is_placeholder(a):
                    raise LogicError(f"unresolved placeholder in atom: {a!r}")
                else:
                    args.append(a)
            if e.pred.predicate_name == "is_type":
                ent = entities.get(args[0])
                return entities.types.is_subtype(ent.entity_type, args[1])
            return valuation(GroundPredicate(e.pred.predicate_name, tuple(args)))
        if isinstance(e, And):
            return all(ev(c, env) for c in e.children)
        if isinstance(e, Or):
            return any(ev(c, env) for c in e.children)
        if isinstance(e, Not):
            return not ev(e.child, env)
        if isinstance(e, Exists):
            return any(
                ev(e.body, {**env, e.var: ent.name}) for ent in entities.of_type(e.var_type)
            )
        if isinstance(e, ForAll):
            return all(
                ev(e.body, {**env, e.var: ent.name}) for ent in entities.of_type(e.var_type)
            )
        raise LogicError(f"unknown expression node: {e!r}")

    return ev(expr, {})


# --- Canonical s-expression serialization -----------------------------------


def to_sexpr(expr: Expr) -> str:
    if isinstance(expr, Atom):
        return str(expr.pred)
    if isinstance(expr, And):
        return "(and " + " ".join(to_sexpr(c) for c in expr.children) + ")"
    if isinstance(expr, Or):
        return "(or " + " ".join(to_sexpr(c) for c in expr.children) + ")"
    if isinstance(expr, Not):
        return f"(not {to_sexpr(expr.child)})"
    if isinstance(expr, Exists):
        return f"(exists {expr.var} {expr.var_type} {to_sexpr(expr.body)})"
    if isinstance(expr, ForAll):
        return f"(forall {expr.var} {expr.var_type} {to_sexpr(expr.body)})"
    raise LogicError(f"unknown expression node: {expr!r}")


_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def parse_sexpr(text: str) -> Expr:
    tokens = _TOKEN_RE.findall(text)
    pos = 0

    def peek() -> str:
        if pos >= len(tokens):
            raise LogicError("unexpected end of expression")
        return tokens[pos]

    def take() -> str:
        nonlocal pos
        tok = peek()
        pos += 1
        return tok

    def parse() -> Expr:
        if take() != "(":
            raise LogicError("expected '('")
        head = take()
        if head in ("and", "or"):
            children = []
            while peek() != ")":
                children.append(parse())
            take()
            return And(tuple(children)) if head == "and" else Or(tuple(children))
        if head == "not":
            child = parse()
            if take() != ")":
                raise LogicError("expected ')'")
            return Not(child)
        if head in ("exists", "forall"):
            var = take()
            var_type = take()
            body = parse()
            if take() != ")":
                raise LogicError("expected ')'")
            cls = Exists if head == "exists" else ForAll
            return cls(var, var_type, body)
        # atom
        args = []
        while peek() != ")":
            args.append(take())
        take()
        return Atom(GroundPredicate(head, tuple(args)))

    expr = parse()
    if pos != len(tokens):
        raise LogicError("trailing tokens after expression")
    return expr
