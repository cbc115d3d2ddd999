"""Two-phase training over unlabeled traces with periodic exact repairs.

Phase one trains the state, action, and model heads on self-supervised
losses alone: every step's action distribution is pulled toward whichever
ground action currently explains that step best. Phase two keeps those
losses and, once per epoch, repairs a small random sample of traces into an
exactly consistent assignment; the repaired states, actions, and case
labels then supervise training directly, discounted by age so stale repairs
fade instead of fighting fresh ones. Endpoints get extra weight: the first
step's applicability loss and the last step's prediction loss are scaled by
gamma, because those states are known rather than guessed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .actions import (
    ActionPredictor,
    action_ce,
    expected_model_loss,
    locally_best_action,
    step_losses,
)
from .fixer import (
    MASKS,
    FixProblem,
    PseudoLabelSet,
    TraceObs,
    act_column_map,
    align_permutation,
    check_result,
    extract_pseudo_labels,
    fix,
    model_agreement,
    permute_model_bits,
    valid_permutations,
)
from .model import CaseTable, GroundLink, case_ce
from .percept import ObservedTrace, StatePredictor, lift_endpoints
from .strips.ground import GroundIndex
from .strips.types import Domain, LiftedModel

_CONFIG_TYPES = {
    "epochs": int,
    "batch": int,
    "lr": float,
    "lam": float,
    "gamma": float,
    "psi": float,
    "warmup": int,
    "fix_traces": int,
    "time_limit": float,
    "mask": str,
    "seed": int,
    "delta": float,
}


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs; fix_traces=0 disables the repair phase."""

    epochs: int = 1000
    batch: int = 128
    lr: float = 1e-4
    lam: float = 0.4
    gamma: float = 10.0
    psi: float = 0.99
    warmup: int = 50
    fix_traces: int = 3
    time_limit: float = 1.0
    mask: str = "all"
    seed: int = 0
    delta: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch < 1:
            raise ValueError("batch must be positive")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative")
        if self.gamma < 1.0:
            raise ValueError("gamma must be at least 1")
        if not 0.0 < self.psi < 1.0:
            raise ValueError("psi must lie strictly between 0 and 1")
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")
        if self.fix_traces < 0:
            raise ValueError("fix_traces must be nonnegative")
        if self.time_limit < 0.0:
            raise ValueError("time_limit must be nonnegative")
        if self.mask not in MASKS:
            raise ValueError(f"mask must be one of {sorted(MASKS)}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie strictly between 0 and 0.5")


def parse_config(text: str) -> TrainConfig:
    """Flat key = value lines; '#' comments; unknown or repeated keys fail."""
    values: dict[str, object] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key or not val:
            raise ValueError(f"config line {ln}: expected 'key = value', got {raw!r}")
        if key not in _CONFIG_TYPES:
            raise ValueError(f"config line {ln}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"config line {ln}: duplicate key {key!r}")
        typ = _CONFIG_TYPES[key]
        try:
            values[key] = val if typ is str else typ(val)
        except ValueError:
            raise ValueError(f"config line {ln}: cannot parse {val!r} as {typ.__name__}") from None
    return TrainConfig(**values)  # type: ignore[arg-type]


def label_weight(birth: int, epoch: int, psi: float) -> float:
    """psi raised to the label's age in epochs."""
    if epoch < birth:
        raise ValueError("labels cannot come from the future")
    return float(psi ** (epoch - birth))


@dataclass(frozen=True)
class TraceLabels:
    birth: int
    states: np.ndarray
    actions: np.ndarray


class LabelStore:
    """Latest repair per trace plus the newest model case labels.

    A re-fixed trace replaces its previous labels wholesale, and each fix
    replaces the case targets; only birth epochs distinguish label ages.
    """

    def __init__(self):
        self.by_trace: dict[str, TraceLabels] = {}
        self.cases: dict[str, np.ndarray] | None = None
        self.cases_birth = 0

    def absorb(self, labels: PseudoLabelSet) -> None:
        for tid in labels.states:
            self.by_trace[tid] = TraceLabels(
                labels.birth_epoch, labels.states[tid], labels.actions[tid]
            )
        self.cases = dict(labels.cases)
        self.cases_birth = labels.birth_epoch


def state_bce(ps: ad.Var, targets: np.ndarray, weights: np.ndarray, delta: float) -> ad.Var:
    """Per-sample-weighted Bernoulli cross-entropy against repaired bits."""
    p = ad.clip(ps, delta, 1.0 - delta)
    y = np.asarray(targets, dtype=np.float64)
    ll = ad.const(y) * ad.log(p) + ad.const(1.0 - y) * ad.log(1.0 - p)
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    return -ad.vsum(ll * ad.const(w)) * (1.0 / ll.value.size)


class Adam:
    """Adaptive first-order step applied in place to shared parameter arrays."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            # in-place so every view of the parameter sees the update
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Trainer:
    """Owns the three heads, their optimizer, the label store, and the clock."""

    def __init__(self, idx: GroundIndex, traces: list[ObservedTrace], config: TrainConfig):
        self.idx = idx
        self.traces = list(traces)
        self.config = config
        rng = np.random.default_rng(config.seed)
        features = self.traces[0].obs.shape[-1] if self.traces else 3
        self.state_pred = StatePredictor(features)
        self.act_pred = ActionPredictor(idx, rng)
        self.table = CaseTable(idx.domain, rng)
        self.link = GroundLink(self.table, idx)
        self.store = LabelStore()
        self.params: dict[str, np.ndarray] = {}
        for head in (self.state_pred, self.act_pred, self.table):
            self.params.update(head.params)
        self.adam = Adam(self.params, config.lr)
        self.epoch_index = 0

    @staticmethod
    def trace_id(i: int) -> str:
        return f"t{i}"

    def _leaves(self) -> dict[str, ad.Var]:
        out: dict[str, ad.Var] = {}
        for head in (self.state_pred, self.act_pred, self.table):
            out.update(head.leaves())
        return out

    # loss assembly

    def _group_loss(self, leaves, group: list[int], steps: int, epoch: int,
                    pre_g: ad.Var, add_g: ad.Var, del_g: ad.Var) -> ad.Var:
        cfg = self.config
        b = len(group)
        trs = [self.traces[i] for i in group]
        ends = [lift_endpoints(tr, cfg.delta) for tr in trs]
        ps: list[ad.Var] = [ad.const(np.stack([e[0] for e in ends]))]
        for t in range(1, steps):
            block = np.stack([tr.obs[t - 1] for tr in trs])
            ps.append(self.state_pred.forward(block, leaves))
        ps.append(ad.const(np.stack([e[1] for e in ends])))

        labels = [self.store.by_trace.get(self.trace_id(i)) for i in group]
        weights = np.array(
            [label_weight(l.birth, epoch, cfg.psi) if l is not None else 1.0 for l in labels]
        )
        labeled = np.flatnonzero([l is not None for l in labels])

        loss: ad.Var | None = None
        for t in range(steps):
            w_app = np.full(b, cfg.gamma if t == 0 else 1.0)
            w_pred = np.full(b, cfg.gamma if t == steps - 1 else 1.0)
            grid = step_losses(ps[t], ps[t + 1], pre_g, add_g, del_g, cfg.lam,
                               w_pred=w_pred, w_app=w_app)
            pr = self.act_pred.forward(ad.concat([ps[t], ps[t + 1]], axis=1), leaves)
            targets = locally_best_action(
                ps[t].value, ps[t + 1].value,
                pre_g.value, add_g.value, del_g.value, cfg.delta,
            )
            for row in labeled:
                targets[row] = labels[row].actions[t]
            term = ad.vmean(expected_model_loss(pr, grid)) + action_ce(
                pr, targets, weights=weights
            )
            loss = term if loss is None else loss + term

        if labeled.size and steps > 1:
            for t in range(1, steps):
                bits = np.stack([labels[r].states[t] for r in labeled])
                part = state_bce(ad.gather(ps[t], labeled), bits, weights[labeled], cfg.delta)
                loss = loss + part * (1.0 / (steps - 1))
        assert loss is not None
        return loss

    def batch_loss(self, leaves: dict[str, ad.Var], indices, epoch: int) -> ad.Var:
        decoded = self.table.decode(leaves)
        pre_g, add_g, del_g = self.link.ground_all(decoded)
        by_steps: dict[int, list[int]] = {}
        for i in indices:
            by_steps.setdefault(self.traces[int(i)].steps, []).append(int(i))
        total: ad.Var | None = None
        for steps in sorted(by_steps):
            group = by_steps[steps]
            part = self._group_loss(leaves, group, steps, epoch, pre_g, add_g, del_g)
            part = part * (len(group) / len(indices))
            total = part if total is None else total + part
        assert total is not None
        if self.store.cases is not None:
            w = label_weight(self.store.cases_birth, epoch, self.config.psi)
            total = total + w * case_ce(self.table.case_probs(leaves), self.store.cases)
        return total

    def _train_pass(self, epoch: int, rng: np.random.Generator) -> float:
        n = len(self.traces)
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, self.config.batch):
            chunk = order[start : start + self.config.batch]
            leaves = self._leaves()
            loss = self.batch_loss(leaves, chunk, epoch)
            ad.backward(loss)
            grads = {k: v.grad for k, v in leaves.items() if v.grad is not None}
            self.adam.step(grads)
            total += float(loss.value) * len(chunk)
            seen += len(chunk)
        return total / max(seen, 1)

    # repair phase

    def predicted_trace(self, i: int) -> TraceObs:
        """Current beliefs about trace i, packaged for the repair program."""
        tr = self.traces[i]
        first, last = lift_endpoints(tr, self.config.delta)
        rows = [first]
        if tr.steps > 1:
            rows.extend(self.state_pred.predict(tr.obs))
        rows.append(last)
        states = np.stack(rows)
        acts = self.act_pred.predict(states[:-1], states[1:])
        return TraceObs(self.trace_id(i), states, acts, tr.initial, tr.final)

    def run_fix(self, epoch: int, rng: np.random.Generator) -> dict[str, object]:
        k = min(self.config.fix_traces, len(self.traces))
        if k == 0:
            return {}
        chosen = np.sort(rng.choice(len(self.traces), size=k, replace=False))
        model_probs = self.table.decoded_arrays()
        problem = FixProblem(
            traces=tuple(self.predicted_trace(int(i)) for i in chosen),
            model_probs=model_probs,
            lam=self.config.lam,
            mask=self.config.mask,
            time_limit=self.config.time_limit,
        )
        result = fix(problem, self.idx)
        stats: dict[str, object] = {
            "fix_status": result.status,
            "fix_nodes": result.nodes,
            "fix_objective": result.objective,
        }
        if not result.has_assignment():
            return stats
        errors = check_result(problem, self.idx, result)
        if errors:
            raise RuntimeError("repair failed verification: " + "; ".join(errors))
        aligned, _ = align_permutation(result, self.idx, model_probs)
        labels = extract_pseudo_labels(aligned, epoch)
        assert labels is not None  # has_assignment() held above
        self.store.absorb(labels)
        return stats

    # orchestration

    def run_epoch(self) -> dict[str, object]:
        epoch = self.epoch_index
        rng = np.random.default_rng([self.config.seed, epoch])
        stats: dict[str, object] = {}
        if epoch >= self.config.warmup:
            stats = self.run_fix(epoch, rng)
        loss = self._train_pass(epoch, rng)
        self.epoch_index = epoch + 1
        return {
            "epoch": epoch,
            "loss": loss,
            "labeled": len(self.store.by_trace),
            **stats,
        }

    def run(self, epochs: int | None = None) -> list[dict[str, object]]:
        n = self.config.epochs if epochs is None else epochs
        return [self.run_epoch() for _ in range(n)]

    # checkpointing

    def save(self, path) -> None:
        arrays: dict[str, np.ndarray] = {}
        for k, v in self.params.items():
            arrays[f"p::{k}"] = v
        for k, v in self.adam.m.items():
            arrays[f"m::{k}"] = v
        for k, v in self.adam.v.items():
            arrays[f"v::{k}"] = v
        for tid, lab in self.store.by_trace.items():
            arrays[f"ls::{tid}"] = lab.states
            arrays[f"la::{tid}"] = np.asarray(lab.actions)
            arrays[f"lb::{tid}"] = np.asarray(lab.birth)
        if self.store.cases is not None:
            for name, cases in self.store.cases.items():
                arrays[f"lc::{name}"] = cases
        arrays["counters"] = np.asarray(
            [self.epoch_index, self.adam.t, self.store.cases_birth]
        )
        np.savez(path, **arrays)

    def load(self, path) -> None:
        with np.load(path) as data:
            for k in self.params:
                self.params[k][...] = data[f"p::{k}"]
                self.adam.m[k][...] = data[f"m::{k}"]
                self.adam.v[k][...] = data[f"v::{k}"]
            births: dict[str, int] = {}
            states: dict[str, np.ndarray] = {}
            actions: dict[str, np.ndarray] = {}
            cases: dict[str, np.ndarray] = {}
            for key in data.files:
                tag, _, rest = key.partition("::")
                if tag == "ls":
                    states[rest] = data[key]
                elif tag == "la":
                    actions[rest] = data[key]
                elif tag == "lb":
                    births[rest] = int(data[key])
                elif tag == "lc":
                    cases[rest] = data[key]
            self.store.by_trace = {
                tid: TraceLabels(births[tid], states[tid], actions[tid]) for tid in states
            }
            self.store.cases = cases or None
            counters = data["counters"]
            self.epoch_index = int(counters[0])
            self.adam.t = int(counters[1])
            self.store.cases_birth = int(counters[2])


# evaluation against withheld ground truth


def model_truth_bits(table: CaseTable, truth: LiftedModel) -> dict[str, np.ndarray]:
    """Ground-truth (pre, add, del) bits in the table's row order."""
    out: dict[str, np.ndarray] = {}
    for name in table.schema_names:
        pre, add, delete = truth.sets_for(name)
        rows = table.rows[name]
        arr = np.zeros((len(rows), 3))
        for r, pbp in enumerate(rows):
            arr[r] = (pbp in pre, pbp in add, pbp in delete)
        out[name] = arr
    return out


def model_metrics(table: CaseTable, truth: LiftedModel, domain: Domain):
    """(err, agree, renaming): mismatch count under the best renaming, the
    best agreement score, and the mismatch-minimizing renaming itself.

    err counts (schema, bound predicate, label) disagreements after
    thresholding at 0.5; agree averages the probability mass placed on the
    true side of each of the 3N labels. Each is optimized over renamings
    independently; ties keep the earliest candidate, so the identity wins
    when nothing beats it.
    """
    decoded = table.decoded_arrays()
    truth_bits = model_truth_bits(table, truth)
    best_err, best_perm, best_agree = None, None, -1.0
    for perm in valid_permutations(domain):
        moved = permute_model_bits(decoded, domain, perm)
        err = sum(
            int(np.sum((moved[name] > 0.5) != (truth_bits[name] > 0.5)))
            for name in moved
        )
        best_agree = max(best_agree, model_agreement(truth_bits, moved))
        if best_err is None or err < best_err:
            best_err, best_perm = err, perm
    assert best_err is not None and best_perm is not None
    return best_err, best_agree, best_perm


def evaluate(
    state_pred: StatePredictor,
    act_pred: ActionPredictor,
    table: CaseTable,
    idx: GroundIndex,
    truth: LiftedModel,
    traces: list[ObservedTrace],
    delta: float = 1e-3,
) -> dict[str, float]:
    """Err/Agree on the model, plus state and action accuracy on traces.

    State accuracy thresholds the interior-state predictions at 0.5 against
    the hidden states; action accuracy compares the per-step argmax action,
    mapped through the Err-minimizing renaming, against the hidden actions.
    """
    err, agree, perm = model_metrics(table, truth, idx.domain)
    col = act_column_map(idx, perm)
    prop_hits = prop_total = 0
    act_hits = act_total = 0
    for tr in traces:
        if tr.hidden is None:
            raise ValueError("evaluation needs traces that kept their hidden block")
        hidden_states = tr.hidden.states.astype(bool)
        first, last = lift_endpoints(tr, delta)
        rows = [first]
        if tr.steps > 1:
            interior = state_pred.predict(tr.obs)
            prop_hits += int(np.sum((interior > 0.5) == hidden_states[1:-1]))
            prop_total += interior.size
            rows.extend(interior)
        rows.append(last)
        states = np.stack(rows)
        pr = act_pred.predict(states[:-1], states[1:])
        predicted = col[np.argmax(pr, axis=-1)]
        act_hits += int(np.sum(predicted == np.asarray(tr.hidden.actions)))
        act_total += len(tr.hidden.actions)
    return {
        "err": float(err),
        "agree": float(agree),
        "state_acc": prop_hits / prop_total if prop_total else 1.0,
        "action_acc": act_hits / act_total if act_total else 1.0,
    }
