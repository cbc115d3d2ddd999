"""Grounding: enumerate propositions and actions, actors, lifted-grounded maps."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

from .types import (
    ActionSchema,
    Domain,
    Instance,
    ParameterBinding,
    ParameterBoundPredicate,
    Predicate,
)


@dataclass(frozen=True)
class Proposition:
    """A predicate applied to distinct objects."""

    predicate: Predicate
    objects: tuple[str, ...]

    def __str__(self) -> str:
        if not self.objects:
            return self.predicate.name
        return f"{self.predicate.name}({', '.join(self.objects)})"


@dataclass(frozen=True)
class GroundAction:
    """A schema applied to distinct objects."""

    schema: ActionSchema
    objects: tuple[str, ...]

    def __str__(self) -> str:
        if not self.objects:
            return self.schema.name
        return f"{self.schema.name}({', '.join(self.objects)})"


def _object_tuples(instance: Instance, param_types: tuple[str, ...]):
    """Injective assignments of objects to a typed parameter list.

    Assignments come out in lexicographic object-name order per slot, which
    keeps downstream indices reproducible.
    """
    pools = [instance.objects_of_type(t) for t in param_types]
    if any(not pool for pool in pools):
        return
    n = len(param_types)

    def extend(i: int, chosen: list[str]):
        if i == n:
            yield tuple(chosen)
            return
        for obj in pools[i]:
            if obj not in chosen:
                chosen.append(obj)
                yield from extend(i + 1, chosen)
                chosen.pop()

    yield from extend(0, [])


class GroundIndex:
    """Deterministic enumeration of an instance's propositions and actions.

    props and acts are sorted by (symbol name, object tuple). actors maps a
    proposition index to the list of (action index, binding) pairs that can
    instantiate it; lift_maps inverts that per action, mapping each of the
    action's parameter-bound predicates to the one proposition it grounds to.
    Injective object bindings make that map one-to-one: composing an injective
    schema binding with an injective predicate-to-schema binding cannot send
    two bound predicates of one action to the same proposition.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self.domain = instance.domain

        self.props: tuple[Proposition, ...] = tuple(
            sorted(
                (
                    Proposition(pred, objs)
                    for pred in self.domain.predicates
                    for objs in _object_tuples(instance, pred.params)
                ),
                key=lambda p: (p.predicate.name, p.objects),
            )
        )
        self.acts: tuple[GroundAction, ...] = tuple(
            sorted(
                (
                    GroundAction(schema, objs)
                    for schema in self.domain.schemas
                    for objs in _object_tuples(instance, schema.params)
                ),
                key=lambda a: (a.schema.name, a.objects),
            )
        )
        self.prop_index: dict[Proposition, int] = {p: i for i, p in enumerate(self.props)}
        self.act_index: dict[GroundAction, int] = {a: i for i, a in enumerate(self.acts)}

        self.actors: list[list[tuple[int, ParameterBinding]]] = [[] for _ in self.props]
        self.lift_maps: list[dict[ParameterBoundPredicate, int]] = [{} for _ in self.acts]
        for ai, act in enumerate(self.acts):
            for pbp in self.domain.bound_predicates(act.schema):
                objs = tuple(act.objects[j] for j in pbp.binding.slots)
                pi = self.prop_index[Proposition(pbp.predicate, objs)]
                self.actors[pi].append((ai, pbp.binding))
                self.lift_maps[ai][pbp] = pi

    @property
    def n_props(self) -> int:
        return len(self.props)

    @property
    def n_acts(self) -> int:
        return len(self.acts)

    def actor_actions(self, pi: int) -> list[int]:
        """Action indices that can affect proposition pi."""
        return [ai for ai, _ in self.actors[pi]]

    def prop_names(self) -> list[str]:
        return [str(p) for p in self.props]

    def act_names(self) -> list[str]:
        return [str(a) for a in self.acts]

    def __repr__(self) -> str:
        return f"GroundIndex({self.n_props} propositions, {self.n_acts} actions)"


def ground(instance: Instance) -> GroundIndex:
    """Enumerate P_I and A_I with injective bindings and build the index."""
    return GroundIndex(instance)


def same_signature_groups(domain: Domain) -> list[list[ActionSchema]]:
    """Schemas grouped by identical parameter signature, each group sorted."""
    groups: dict[tuple[str, ...], list[ActionSchema]] = {}
    for s in domain.schemas:
        groups.setdefault(s.params, []).append(s)
    return [sorted(g, key=lambda s: s.name) for g in groups.values()]


def same_type_param_perms(schema: ActionSchema) -> list[tuple[int, ...]]:
    """Parameter permutations that only move slots of equal type.

    Returned as tuples pi where slot i is renamed to pi[i]; identity first,
    lexicographic order overall.
    """
    out = []
    for perm in permutations(range(schema.arity)):
        if all(schema.params[i] == schema.params[perm[i]] for i in range(schema.arity)):
            out.append(perm)
    return out
