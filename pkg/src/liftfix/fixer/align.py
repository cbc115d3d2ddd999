"""Schema and parameter renaming between equivalent lifted models.

Without action labels the learner can only pin a model down up to renaming
of same-signature schemas and same-type parameters. Before a repair result
is compared against (or distilled into) the current predictions, it gets
rotated into the naming that agrees best with them, so pseudo-labels do not
fight an earlier arbitrary choice of names.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import permutations, product
from math import factorial
from typing import Iterator

import numpy as np

from ..strips.ground import GroundAction, GroundIndex, same_signature_groups, same_type_param_perms
from ..strips.types import Domain
from .solver import FixResult


@dataclass(frozen=True)
class Permutation:
    """A renaming: schema_map sends each schema name to its new name, and
    param_maps[name] sends the schema's slot s to slot param_maps[name][s]
    of the renamed schema. Only same-signature schemas and same-type slots
    may trade places, so every renaming preserves grounding."""

    schema_map: dict[str, str]
    param_maps: dict[str, tuple[int, ...]]

    def is_identity(self) -> bool:
        return all(k == v for k, v in self.schema_map.items()) and all(
            sigma == tuple(range(len(sigma))) for sigma in self.param_maps.values()
        )


def count_permutations(domain: Domain) -> int:
    total = 1
    for group in same_signature_groups(domain):
        total *= factorial(len(group))
    for schema in domain.schemas:
        total *= len(same_type_param_perms(schema))
    return total


def valid_permutations(domain: Domain) -> Iterator[Permutation]:
    """All renamings, identity first, in a fixed lexicographic order."""
    groups = same_signature_groups(domain)
    target_choices = [list(permutations(g)) for g in groups]
    sources = [s for g in groups for s in g]
    sigma_choices = [same_type_param_perms(s) for s in sources]
    for targets in product(*target_choices):
        flat_targets = [t for group in targets for t in group]
        schema_map = {s.name: t.name for s, t in zip(sources, flat_targets)}
        for sigmas in product(*sigma_choices):
            yield Permutation(
                schema_map=dict(schema_map),
                param_maps={s.name: sig for s, sig in zip(sources, sigmas)},
            )


def permute_model_bits(
    bits: dict[str, np.ndarray], domain: Domain, perm: Permutation
) -> dict[str, np.ndarray]:
    """Rows move with their schema: (rho, slots) lands on the renamed schema
    as (rho, sigma[slots]). Same signatures guarantee the target row exists."""
    out: dict[str, np.ndarray] = {}
    for src_name, table in bits.items():
        tgt_name = perm.schema_map[src_name]
        sigma = perm.param_maps[src_name]
        tgt_rows = domain.bound_predicates(domain.schema(tgt_name))
        row_of = {(r.predicate.name, r.binding.slots): i for i, r in enumerate(tgt_rows)}
        moved = np.zeros_like(table)
        for i, r in enumerate(domain.bound_predicates(domain.schema(src_name))):
            j = row_of[(r.predicate.name, tuple(sigma[s] for s in r.binding.slots))]
            moved[j] = table[i]
        out[tgt_name] = moved
    return out


def act_column_map(idx: GroundIndex, perm: Permutation) -> np.ndarray:
    """Where each ground action lands: column ai moves to col[ai]."""
    col = np.empty(idx.n_acts, dtype=np.intp)
    for ai, ga in enumerate(idx.acts):
        tgt = idx.domain.schema(perm.schema_map[ga.schema.name])
        sigma = perm.param_maps[ga.schema.name]
        objs = [""] * len(ga.objects)
        for s, obj in enumerate(ga.objects):
            objs[sigma[s]] = obj
        col[ai] = idx.act_index[GroundAction(tgt, tuple(objs))]
    return col


def apply_permutation(result: FixResult, idx: GroundIndex, perm: Permutation) -> FixResult:
    """The same solution under renamed schemas; states are untouched."""
    bits = permute_model_bits(result.model_bits, idx.domain, perm)
    col = act_column_map(idx, perm)
    act = {}
    for tid, grid in result.act.items():
        moved = np.zeros_like(grid)
        moved[:, col] = grid
        act[tid] = moved
    return FixResult(
        status=result.status,
        objective=result.objective,
        bound=result.bound,
        nodes=result.nodes,
        hol=dict(result.hol),
        act=act,
        model_bits=bits,
    )


def model_agreement(bits: dict[str, np.ndarray], probs: dict[str, np.ndarray]) -> float:
    """Mean probability mass on the side each bit picked, over all 3N bits."""
    hits = 0.0
    n = 0
    for name, table in bits.items():
        y = probs[name]
        hits += float(np.sum(table * y + (1.0 - table) * (1.0 - y)))
        n += table.size
    return hits / n


def align_permutation(
    result: FixResult,
    idx: GroundIndex,
    model_probs: dict[str, np.ndarray],
    cap: int = 20_000,
) -> tuple[FixResult, Permutation]:
    """Pick the renaming whose model bits agree best with the predictions.

    Ties keep the earlier candidate, so the identity wins when nothing beats
    it. Domains with more renamings than the cap skip the search; learning
    still works, the names just stay wherever the solver put them.
    """
    if not result.has_assignment():
        return result, _identity(idx.domain)
    total = count_permutations(idx.domain)
    if total > cap:
        warnings.warn(
            f"{total} candidate renamings exceed the cap of {cap}; keeping identity",
            stacklevel=2,
        )
        return result, _identity(idx.domain)
    best_perm = None
    best_score = -1.0
    for perm in valid_permutations(idx.domain):
        score = model_agreement(
            permute_model_bits(result.model_bits, idx.domain, perm), model_probs
        )
        if score > best_score:
            best_perm, best_score = perm, score
    assert best_perm is not None
    if best_perm.is_identity():
        return result, best_perm
    return apply_permutation(result, idx, best_perm), best_perm


def _identity(domain: Domain) -> Permutation:
    return Permutation(
        schema_map={s.name: s.name for s in domain.schemas},
        param_maps={s.name: tuple(range(s.arity)) for s in domain.schemas},
    )
