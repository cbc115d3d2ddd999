"""Trace generation: seeded random walks and the exhaustive consistency oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ground import GroundIndex
from .semantics import GroundModel
from .types import LiftedModel


class DeadEndError(RuntimeError):
    """A random walk reached a state with no applicable action.

    Carries the prefix generated so far in ``states`` and ``actions``.
    """

    def __init__(self, states: np.ndarray, actions: list[int]):
        super().__init__(f"dead end after {len(actions)} steps")
        self.states = states
        self.actions = actions


@dataclass(frozen=True)
class StateTrace:
    """A state sequence s_1..s_{T+1}, optionally with the generating actions.

    ``actions`` is evaluation-only ground truth; nothing on the training
    path may read it.
    """

    states: np.ndarray
    actions: tuple[int, ...] | None = None

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    def key(self) -> bytes:
        """Hashable identity of the state sequence alone."""
        return np.ascontiguousarray(self.states.astype(np.uint8)).tobytes()


StateSampler = Callable[[GroundIndex, np.random.Generator], np.ndarray]


def random_walk(
    idx: GroundIndex,
    model: LiftedModel,
    k: int,
    rng: np.random.Generator,
    init: np.ndarray | StateSampler,
) -> StateTrace:
    """Walk k steps from an initial state, picking applicable actions uniformly.

    ``init`` is either a concrete state vector or a sampler called with
    (idx, rng). Deterministic given the rng state. Raises DeadEndError with
    the produced prefix when no action is applicable.
    """
    s = init(idx, rng) if callable(init) else np.asarray(init, dtype=bool)
    if s.shape != (idx.n_props,):
        raise ValueError(f"initial state has width {s.shape}, expected {idx.n_props}")
    gm = GroundModel(model, idx)
    states = [s]
    actions: list[int] = []
    for _ in range(k):
        mask = gm.applicable_mask(states[-1])
        choices = np.flatnonzero(mask)
        if choices.size == 0:
            raise DeadEndError(np.stack(states), actions)
        ai = int(choices[rng.integers(choices.size)])
        actions.append(ai)
        states.append(gm.successor(states[-1], ai))
    return StateTrace(np.stack(states), tuple(actions))


def enumerate_consistent_traces(
    idx: GroundIndex,
    model: LiftedModel,
    s1: np.ndarray,
    k: int,
    cap: int = 1_000_000,
) -> list[StateTrace]:
    """Exactly the length-k state traces from s1 consistent with the model.

    Brute force over action sequences, deduplicated by state sequence; used
    as a test oracle. Refuses when |A_I|**k exceeds the cap.
    """
    if idx.n_acts**k > cap:
        raise ValueError(f"{idx.n_acts}**{k} exceeds enumeration cap {cap}")
    gm = GroundModel(model, idx)
    s1 = np.asarray(s1, dtype=bool)
    found: dict[bytes, StateTrace] = {}

    def extend(states: list[np.ndarray]) -> None:
        if len(states) == k + 1:
            tr = StateTrace(np.stack(states))
            found.setdefault(tr.key(), tr)
            return
        mask = gm.applicable_mask(states[-1])
        for ai in np.flatnonzero(mask):
            states.append(gm.successor(states[-1], int(ai)))
            extend(states)
            states.pop()

    extend([s1])
    return sorted(found.values(), key=lambda tr: tr.key())
