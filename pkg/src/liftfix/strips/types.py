"""Typed STRIPS vocabulary: type tree, predicates, schemas, parameter bindings.

Everything here is immutable after construction and safe to share across
threads. Bindings are injective throughout; this is what makes grounding
counts smaller than in tools that allow repeated objects, and it makes the
lifted-to-grounded map one-to-one per action (see liftfix.strips.ground).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping


class DomainError(ValueError):
    """A domain object violates its declared structure."""


class TypeTree:
    """Tree of type names with subtype subsumption.

    ``parent`` maps every type to its parent type; roots map to None.
    """

    def __init__(self, parent: Mapping[str, str | None]):
        self._parent = dict(parent)
        self.nodes = frozenset(self._parent)
        for t, p in self._parent.items():
            if p is not None and p not in self._parent:
                raise DomainError(f"type {t!r} has unknown parent {p!r}")
        # Walking up from every node must terminate at a root.
        for t in self._parent:
            seen = {t}
            cur = self._parent[t]
            while cur is not None:
                if cur in seen:
                    raise DomainError(f"type cycle through {cur!r}")
                seen.add(cur)
                cur = self._parent[cur]

    def __contains__(self, t: str) -> bool:
        return t in self.nodes

    def parent(self, t: str) -> str | None:
        self._check(t)
        return self._parent[t]

    def ancestors(self, t: str) -> Iterator[str]:
        """Yield t's proper ancestors, nearest first."""
        self._check(t)
        cur = self._parent[t]
        while cur is not None:
            yield cur
            cur = self._parent[cur]

    def subsumes(self, t1: str, t2: str) -> bool:
        """True iff t1 equals t2 or t1 is an ancestor of t2."""
        self._check(t1)
        self._check(t2)
        return t1 == t2 or t1 in self.ancestors(t2)

    def _check(self, t: str) -> None:
        if t not in self._parent:
            raise DomainError(f"unknown type {t!r}")

    def __repr__(self) -> str:
        return f"TypeTree({self._parent!r})"


@dataclass(frozen=True)
class Predicate:
    """A predicate symbol with an ordered, typed parameter list."""

    name: str
    params: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.params)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.params)})"


@dataclass(frozen=True)
class ActionSchema:
    """An action schema symbol with an ordered, typed parameter list."""

    name: str
    params: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.params)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.params)})"


@dataclass(frozen=True)
class ParameterBinding:
    """Injective map from predicate parameter slots to schema parameter slots.

    ``slots[i]`` is the schema parameter index that predicate parameter i
    binds to. The empty tuple is the unique binding of a zero-ary predicate.
    """

    slots: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.slots)) != len(self.slots):
            raise DomainError(f"binding {self.slots} is not injective")

    def __len__(self) -> int:
        return len(self.slots)

    def __str__(self) -> str:
        return "(" + " ".join(str(s) for s in self.slots) + ")"


@dataclass(frozen=True)
class ParameterBoundPredicate:
    """A predicate bound into a schema's parameters: the lifted model unit."""

    predicate: Predicate
    binding: ParameterBinding
    schema: ActionSchema

    def __str__(self) -> str:
        args = ", ".join(f"?{self.binding.slots[i]}" for i in range(self.predicate.arity))
        return f"{self.predicate.name}({args})@{self.schema.name}"


def binding_is_valid(
    pred: Predicate, binding: ParameterBinding, schema: ActionSchema, types: TypeTree
) -> bool:
    """Check binding shape, range, and type compatibility.

    The predicate's parameter type must subsume the schema's parameter type
    it binds to (the schema parameter is the more specific one).
    """
    if len(binding.slots) != pred.arity:
        return False
    for i, j in enumerate(binding.slots):
        if not 0 <= j < schema.arity:
            return False
        if not types.subsumes(pred.params[i], schema.params[j]):
            return False
    return True


class Domain:
    """Predicate and schema vocabulary over a type tree.

    Declaration order of predicates and schemas is preserved for display,
    but every enumeration that feeds indices (grounding, lifted model rows)
    is sorted, so indices do not depend on declaration order.
    """

    def __init__(
        self,
        name: str,
        types: TypeTree,
        predicates: list[Predicate] | tuple[Predicate, ...],
        schemas: list[ActionSchema] | tuple[ActionSchema, ...],
    ):
        self.name = name
        self.types = types
        self.predicates = tuple(predicates)
        self.schemas = tuple(schemas)
        names = [p.name for p in self.predicates]
        if len(set(names)) != len(names):
            raise DomainError("duplicate predicate name")
        snames = [s.name for s in self.schemas]
        if len(set(snames)) != len(snames):
            raise DomainError("duplicate schema name")
        for p in self.predicates:
            for t in p.params:
                if t not in types:
                    raise DomainError(f"predicate {p.name}: unknown type {t!r}")
        for s in self.schemas:
            for t in s.params:
                if t not in types:
                    raise DomainError(f"schema {s.name}: unknown type {t!r}")
        self._pred_by_name = {p.name: p for p in self.predicates}
        self._schema_by_name = {s.name: s for s in self.schemas}
        self._bound_cache: dict[str, tuple[ParameterBoundPredicate, ...]] = {}

    def predicate(self, name: str) -> Predicate:
        try:
            return self._pred_by_name[name]
        except KeyError:
            raise DomainError(f"unknown predicate {name!r}") from None

    def schema(self, name: str) -> ActionSchema:
        try:
            return self._schema_by_name[name]
        except KeyError:
            raise DomainError(f"unknown schema {name!r}") from None

    def bound_predicates(self, schema: ActionSchema) -> tuple[ParameterBoundPredicate, ...]:
        """All parameter-bound predicates of a schema, in a fixed order.

        Sorted by (predicate name, binding slots); this ordering defines the
        row indices of every lifted model table in the package.
        """
        cached = self._bound_cache.get(schema.name)
        if cached is not None:
            return cached
        out = []
        for pred in sorted(self.predicates, key=lambda p: p.name):
            for binding in enumerate_param_bindings(pred, schema, self.types):
                out.append(ParameterBoundPredicate(pred, binding, schema))
        result = tuple(out)
        self._bound_cache[schema.name] = result
        return result

    def __repr__(self) -> str:
        return (
            f"Domain({self.name!r}, {len(self.predicates)} predicates, "
            f"{len(self.schemas)} schemas)"
        )


def enumerate_param_bindings(
    pred: Predicate, schema: ActionSchema, types: TypeTree
) -> list[ParameterBinding]:
    """All injective, type-respecting bindings of pred into schema.

    Returned in lexicographic order of the slot tuple. A zero-ary predicate
    yields exactly the empty binding; a predicate with no compatible schema
    slot yields nothing.
    """
    candidates: list[list[int]] = []
    for i in range(pred.arity):
        ok = [j for j in range(schema.arity) if types.subsumes(pred.params[i], schema.params[j])]
        if not ok:
            return []
        candidates.append(ok)

    out: list[ParameterBinding] = []

    def extend(i: int, used: list[int]) -> None:
        if i == pred.arity:
            out.append(ParameterBinding(tuple(used)))
            return
        for j in candidates[i]:
            if j not in used:
                used.append(j)
                extend(i + 1, used)
                used.pop()

    extend(0, [])
    return out


@dataclass(frozen=True)
class LiftedModel:
    """A discrete lifted action model: per schema, the pre/add/delete sets.

    Add effects and preconditions must not intersect, and only preconditions
    may be deleted. Equality compares the three set families only, so a model
    parsed from a printed copy of another compares equal.
    """

    domain: Domain = field(compare=False)
    pre: Mapping[str, frozenset[ParameterBoundPredicate]]
    add: Mapping[str, frozenset[ParameterBoundPredicate]]
    delete: Mapping[str, frozenset[ParameterBoundPredicate]]

    def __post_init__(self):
        # Normalize to plain dicts with an entry per schema, so two
        # structurally equal models compare equal regardless of missing keys.
        for attr in ("pre", "add", "delete"):
            m = getattr(self, attr)
            object.__setattr__(
                self,
                attr,
                {s.name: frozenset(m.get(s.name, frozenset())) for s in self.domain.schemas},
            )
        for s in self.domain.schemas:
            pre = self.pre[s.name]
            add = self.add[s.name]
            dele = self.delete[s.name]
            if add & pre:
                raise DomainError(f"{s.name}: add effects intersect preconditions")
            if not dele <= pre:
                raise DomainError(f"{s.name}: delete effects not within preconditions")
            rows = set(self.domain.bound_predicates(s))
            for pbp in pre | add | dele:
                if pbp not in rows:
                    raise DomainError(f"{s.name}: foreign bound predicate {pbp}")

    def sets_for(self, schema_name: str):
        return (
            self.pre.get(schema_name, frozenset()),
            self.add.get(schema_name, frozenset()),
            self.delete.get(schema_name, frozenset()),
        )


class Instance:
    """A finite object set over a domain.

    Object types may be any node of the type tree, not only leaves; several
    shipped domains type some objects at inner nodes.
    """

    def __init__(self, domain: Domain, objects: Mapping[str, str]):
        self.domain = domain
        self.objects = dict(objects)
        for obj, t in self.objects.items():
            if t not in domain.types:
                raise DomainError(f"object {obj!r} has unknown type {t!r}")

    def objects_of_type(self, t: str) -> list[str]:
        """Objects whose declared type is subsumed by t, sorted by name."""
        return sorted(
            o for o, ot in self.objects.items() if self.domain.types.subsumes(t, ot)
        )

    def __repr__(self) -> str:
        return f"Instance({self.domain.name!r}, {len(self.objects)} objects)"
