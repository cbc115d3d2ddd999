"""Pseudo-labels lifted out of a repair solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import case_of_bits
from ..strips.types import Domain, LiftedModel
from .solver import FixResult


@dataclass(frozen=True)
class PseudoLabelSet:
    """Targets distilled from one repair, stamped with their birth epoch.

    states holds the full (T+1, P) grids, actions the chosen index per step,
    cases the 1..4 case number per (schema, bound predicate) row.
    """

    birth_epoch: int
    states: dict[str, np.ndarray]
    actions: dict[str, np.ndarray]
    cases: dict[str, np.ndarray]


def extract_pseudo_labels(result: FixResult, epoch: int) -> PseudoLabelSet | None:
    """None when the solve produced no assignment to learn from."""
    if not result.has_assignment():
        return None
    states = {tid: grid.astype(np.int8) for tid, grid in result.hol.items()}
    actions = {tid: np.argmax(grid, axis=1) for tid, grid in result.act.items()}
    cases = {}
    for name, bits in result.model_bits.items():
        cases[name] = np.array(
            [case_of_bits(b[0], b[1], b[2]) for b in bits], dtype=np.int8
        )
    return PseudoLabelSet(birth_epoch=epoch, states=states, actions=actions, cases=cases)


def model_from_bits(domain: Domain, model_bits: dict[str, np.ndarray]) -> LiftedModel:
    """Interpret 0/1 rows as a lifted model; raises if the bits are invalid."""
    pre: dict[str, frozenset] = {}
    add: dict[str, frozenset] = {}
    delete: dict[str, frozenset] = {}
    for name, bits in model_bits.items():
        rows = domain.bound_predicates(domain.schema(name))
        if len(rows) != bits.shape[0]:
            raise ValueError(f"bit rows for {name!r} do not match the schema")
        pre[name] = frozenset(r for i, r in enumerate(rows) if bits[i, 0])
        add[name] = frozenset(r for i, r in enumerate(rows) if bits[i, 1])
        delete[name] = frozenset(r for i, r in enumerate(rows) if bits[i, 2])
    return LiftedModel(domain, pre, add, delete)
