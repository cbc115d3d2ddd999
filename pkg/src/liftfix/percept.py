"""Synthetic observation channel and the trainable state predictor.

A trace is observed as: the initial and final states exactly, and every
interior state only through noisy per-proposition feature vectors. Each
proposition emits F features centered at +1 when true and -1 when false;
each feature independently flips sign with probability flip_rate and gets
additive Gaussian noise. The state predictor is a logistic read-out with
one weight per feature, shared across propositions, so it has to learn the
calibration but cannot memorize propositions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .strips.ground import GroundIndex
from .strips.traces import StateTrace

TRACE_SCHEMA = "trace/1"
MANIFEST_SCHEMA = "trace-manifest/1"


@dataclass(frozen=True)
class ChannelParams:
    """Observation channel: per-feature sign flips plus additive noise."""

    flip_rate: float = 0.05
    sigma: float = 0.1
    features: int = 3

    def __post_init__(self):
        if not 0.0 <= self.flip_rate < 0.5:
            raise ValueError("flip_rate must be in [0, 0.5) to keep states identifiable")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.features < 1:
            raise ValueError("need at least one feature per proposition")


def emit_observation(s: np.ndarray, ch: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """Feature block (|P_I|, F) for one state."""
    signs = np.where(np.asarray(s, dtype=bool)[:, None], 1.0, -1.0)
    flips = rng.random((s.shape[0], ch.features)) < ch.flip_rate
    noise = rng.standard_normal((s.shape[0], ch.features))
    return signs * np.where(flips, -1.0, 1.0) + ch.sigma * noise


@dataclass(frozen=True)
class ObservedTrace:
    """What training sees of one trace.

    initial and final are exact bitvectors; obs holds feature blocks for the
    interior states s_2..s_T, shape (T-1, |P_I|, F). hidden carries the full
    generating trace for evaluation only; no training path may read it.
    """

    initial: np.ndarray
    obs: np.ndarray
    final: np.ndarray
    hidden: StateTrace | None = None

    @property
    def steps(self) -> int:
        return self.obs.shape[0] + 1


def observe_trace(
    trace: StateTrace, ch: ChannelParams, rng: np.random.Generator, keep_hidden: bool = True
) -> ObservedTrace:
    states = trace.states
    interior = np.stack(
        [emit_observation(states[t], ch, rng) for t in range(1, states.shape[0] - 1)]
    ) if states.shape[0] > 2 else np.zeros((0, states.shape[1], ch.features))
    return ObservedTrace(
        initial=states[0].astype(bool),
        obs=interior,
        final=states[-1].astype(bool),
        hidden=trace if keep_hidden else None,
    )


def lift_endpoints(trace: ObservedTrace, delta: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint bits as clamped probability vectors; constants, no gradient."""
    lo, hi = delta, 1.0 - delta
    return (
        np.where(trace.initial, hi, lo),
        np.where(trace.final, hi, lo),
    )


class StatePredictor:
    """Logistic read-out over the F features of each proposition.

    The channel centers features at +1/-1, so equal weights are already
    directionally right; training mainly sharpens the calibration.
    """

    def __init__(self, features: int):
        self.features = features
        self.params: dict[str, np.ndarray] = {
            "state/w": np.full(features, 1.0 / features),
            "state/b": np.zeros(()),
        }

    def leaves(self) -> dict[str, ad.Var]:
        return {k: ad.var(v) for k, v in self.params.items()}

    def forward(self, obs: np.ndarray, leaves: dict[str, ad.Var]) -> ad.Var:
        """Probabilistic state for feature blocks shaped (..., |P_I|, F)."""
        flat = ad.reshape(ad.const(obs), (-1, self.features))
        scores = ad.matmul(flat, leaves["state/w"]) + leaves["state/b"]
        return ad.reshape(ad.sigmoid(scores), obs.shape[:-1])

    def predict(self, obs: np.ndarray) -> np.ndarray:
        """Plain numpy forward pass."""
        return self.forward(obs, self.leaves()).value


def write_traces(
    path,
    traces: list[ObservedTrace],
    idx: GroundIndex,
    manifest: dict,
) -> None:
    """Line-delimited JSON: one manifest line, then one record per trace."""
    prop_names = idx.prop_names()
    act_names = idx.act_names()
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": MANIFEST_SCHEMA, **manifest}) + "\n")
        for tr in traces:
            record = {
                "schema": TRACE_SCHEMA,
                "initial": [prop_names[i] for i in np.flatnonzero(tr.initial)],
                "obs": [step.reshape(-1).tolist() for step in tr.obs],
                "final": [prop_names[i] for i in np.flatnonzero(tr.final)],
            }
            if tr.hidden is not None:
                record["hidden"] = {
                    "states": [
                        [prop_names[i] for i in np.flatnonzero(s)] for s in tr.hidden.states
                    ],
                    "actions": [act_names[a] for a in tr.hidden.actions or ()],
                }
            fh.write(json.dumps(record) + "\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        first = json.loads(fh.readline())
    if first.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{path}: expected a {MANIFEST_SCHEMA} manifest line")
    return first


def _bits(names: list[str], index: dict[str, int], width: int) -> np.ndarray:
    out = np.zeros(width, dtype=bool)
    for name in names:
        out[index[name]] = True
    return out


def read_traces(path, idx: GroundIndex, with_hidden: bool = False) -> list[ObservedTrace]:
    """Load trace records; the hidden block is parsed only when asked for.

    Training code must call this with with_hidden=False (the default), which
    never deserializes the ground-truth block.
    """
    prop_index = {name: i for i, name in enumerate(idx.prop_names())}
    act_index = {name: i for i, name in enumerate(idx.act_names())}
    features: int | None = None
    out: list[ObservedTrace] = []
    with open(path) as fh:
        manifest = json.loads(fh.readline())
        features = int(manifest.get("features", 0)) or None
        for line in fh:
            record = json.loads(line)
            if record.get("schema") != TRACE_SCHEMA:
                raise ValueError(f"unexpected record schema {record.get('schema')!r}")
            initial = _bits(record["initial"], prop_index, idx.n_props)
            final = _bits(record["final"], prop_index, idx.n_props)
            steps = record["obs"]
            if steps:
                if features is None:
                    features = len(steps[0]) // idx.n_props
                obs = np.asarray(steps, dtype=np.float64).reshape(
                    len(steps), idx.n_props, features
                )
            else:
                obs = np.zeros((0, idx.n_props, features or 1))
            hidden = None
            if with_hidden and "hidden" in record:
                h = record["hidden"]
                states = np.stack([_bits(s, prop_index, idx.n_props) for s in h["states"]])
                actions = tuple(act_index[a] for a in h["actions"])
                hidden = StateTrace(states, actions)
            out.append(ObservedTrace(initial=initial, obs=obs, final=final, hidden=hidden))
    return out
