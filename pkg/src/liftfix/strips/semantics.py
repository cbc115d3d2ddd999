"""Ground action-model semantics over bitvector states.

States are numpy bool arrays of width |P_I|, indexed like GroundIndex.props.
"""

from __future__ import annotations

import numpy as np

from .ground import GroundIndex
from .types import LiftedModel


class InapplicableError(RuntimeError):
    """An action was applied in a state that does not satisfy its preconditions."""


def ground_action_model(
    model: LiftedModel, idx: GroundIndex, ai: int
) -> tuple[frozenset[int], frozenset[int], frozenset[int]]:
    """Ground one action's pre/add/delete sets to proposition indices."""
    schema = idx.acts[ai].schema
    pre, add, delete = model.sets_for(schema.name)
    lift = idx.lift_maps[ai]
    return (
        frozenset(lift[p] for p in pre),
        frozenset(lift[p] for p in add),
        frozenset(lift[p] for p in delete),
    )


class GroundModel:
    """A lifted model grounded to boolean effect matrices for one instance.

    pre, add, delete have shape (|A_I|, |P_I|). Rows inherit the lifted
    validity constraints: add and pre are disjoint, delete implies pre.
    """

    def __init__(self, model: LiftedModel, idx: GroundIndex):
        self.idx = idx
        self.model = model
        n_a, n_p = idx.n_acts, idx.n_props
        self.pre = np.zeros((n_a, n_p), dtype=bool)
        self.add = np.zeros((n_a, n_p), dtype=bool)
        self.delete = np.zeros((n_a, n_p), dtype=bool)
        for ai in range(n_a):
            p, a, d = ground_action_model(model, idx, ai)
            self.pre[ai, list(p)] = True
            self.add[ai, list(a)] = True
            self.delete[ai, list(d)] = True

    def applicable(self, s: np.ndarray, ai: int) -> bool:
        return bool(np.all(s[self.pre[ai]]))

    def applicable_mask(self, s: np.ndarray) -> np.ndarray:
        """Boolean mask over all actions: preconditions hold in s."""
        return ~np.any(self.pre & ~s[None, :], axis=1)

    def successor(self, s: np.ndarray, ai: int) -> np.ndarray:
        if not self.applicable(s, ai):
            raise InapplicableError(f"{self.idx.acts[ai]} is not applicable")
        return (s & ~self.delete[ai]) | self.add[ai]

    def successors_all(self, s: np.ndarray, action_mask: np.ndarray) -> np.ndarray:
        """Successor rows for every action in the mask, stacked in index order."""
        return (s[None, :] & ~self.delete[action_mask]) | self.add[action_mask]


def applicable(s: np.ndarray, ai: int, model: LiftedModel, idx: GroundIndex) -> bool:
    """True iff all ground preconditions of action ai hold in s."""
    pre, _, _ = ground_action_model(model, idx, ai)
    return all(bool(s[p]) for p in pre)


def successor(s: np.ndarray, ai: int, model: LiftedModel, idx: GroundIndex) -> np.ndarray:
    """res(s, a) = (s minus Del(a)) union Add(a); a must be applicable."""
    pre, add, delete = ground_action_model(model, idx, ai)
    if not all(bool(s[p]) for p in pre):
        raise InapplicableError(f"{idx.acts[ai]} is not applicable")
    out = s.copy()
    out[list(delete)] = False
    out[list(add)] = True
    return out


def trace_consistent(
    states: np.ndarray, model: LiftedModel, idx: GroundIndex
) -> tuple[bool, list[int] | None]:
    """Check that each step has an action explaining it; return witnesses.

    states has shape (T+1, |P_I|). Returns (True, witness action indices)
    with the lowest-index witness per step, or (False, None). A length-0
    trace is vacuously consistent.
    """
    gm = GroundModel(model, idx)
    witnesses: list[int] = []
    for t in range(states.shape[0] - 1):
        s, s_next = states[t], states[t + 1]
        mask = gm.applicable_mask(s)
        if not mask.any():
            return False, None
        succ = gm.successors_all(s, mask)
        hits = np.all(succ == s_next[None, :], axis=1)
        if not hits.any():
            return False, None
        witnesses.append(int(np.flatnonzero(mask)[int(np.argmax(hits))]))
    return True, witnesses
