"""Probabilistic lifted action model: four-case rows, grounding, core losses.

Every (schema, parameter-bound predicate) row carries four logits over the
mutually exclusive cases

    1 irrelevant   2 add effect only   3 precondition only
    4 precondition and delete effect

whose softmax decodes into precondition/add/delete probabilities. The decode
masks guarantee add + pre <= 1 and del <= pre entrywise for any logits, so
the validity constraints hold by construction.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .strips.ground import GroundIndex
from .strips.types import Domain, LiftedModel, ParameterBoundPredicate

CASE_IRRELEVANT, CASE_ADD, CASE_PRE, CASE_PREDEL = 1, 2, 3, 4

PRE_MASK = np.array([0.0, 0.0, 1.0, 1.0])
ADD_MASK = np.array([0.0, 1.0, 0.0, 0.0])
DEL_MASK = np.array([0.0, 0.0, 0.0, 1.0])

_CASE_BITS = {
    (False, False, False): CASE_IRRELEVANT,
    (False, True, False): CASE_ADD,
    (True, False, False): CASE_PRE,
    (True, False, True): CASE_PREDEL,
}


def case_of_bits(pre: bool, add: bool, delete: bool) -> int:
    """Map a valid (pre, add, del) bit triple to its case number."""
    try:
        return _CASE_BITS[(bool(pre), bool(add), bool(delete))]
    except KeyError:
        raise ValueError(f"no case for bits pre={pre} add={add} del={delete}") from None


def bits_of_case(case: int) -> tuple[bool, bool, bool]:
    for bits, c in _CASE_BITS.items():
        if c == case:
            return bits
    raise ValueError(f"unknown case {case}")


class CaseTable:
    """Trainable case logits for every (schema, bound predicate) row.

    Row order per schema is the domain's bound_predicates order; schemas are
    kept in sorted-name order everywhere.
    """

    def __init__(self, domain: Domain, rng: np.random.Generator | None = None, scale: float = 0.1):
        self.domain = domain
        self.schema_names: tuple[str, ...] = tuple(sorted(s.name for s in domain.schemas))
        self.rows: dict[str, tuple[ParameterBoundPredicate, ...]] = {
            name: domain.bound_predicates(domain.schema(name)) for name in self.schema_names
        }
        self.params: dict[str, np.ndarray] = {}
        for name in self.schema_names:
            n = len(self.rows[name])
            logits = np.zeros((n, 4)) if rng is None else rng.normal(0.0, scale, (n, 4))
            self.params[f"case/{name}"] = logits

    @classmethod
    def from_action_model(cls, model: LiftedModel, hot: float = 40.0) -> "CaseTable":
        """Saturated logits reproducing a discrete model to ~1e-16."""
        table = cls(model.domain)
        for name in table.schema_names:
            pre, add, delete = model.sets_for(name)
            logits = table.params[f"case/{name}"]
            for r, pbp in enumerate(table.rows[name]):
                case = case_of_bits(pbp in pre, pbp in add, pbp in delete)
                logits[r, case - 1] = hot
        return table

    def leaves(self) -> dict[str, ad.Var]:
        return {k: ad.var(v) for k, v in self.params.items()}

    def case_probs(self, leaves: dict[str, ad.Var]) -> dict[str, ad.Var]:
        return {name: ad.softmax(leaves[f"case/{name}"], axis=-1) for name in self.schema_names}

    def decode(self, leaves: dict[str, ad.Var]) -> dict[str, tuple[ad.Var, ad.Var, ad.Var]]:
        """Per schema: (pre, add, del) row vectors, differentiable."""
        out = {}
        for name, probs in self.case_probs(leaves).items():
            out[name] = (
                ad.matmul(probs, ad.const(PRE_MASK)),
                ad.matmul(probs, ad.const(ADD_MASK)),
                ad.matmul(probs, ad.const(DEL_MASK)),
            )
        return out

    def decoded_arrays(self) -> dict[str, np.ndarray]:
        """Per schema: (rows, 3) array of decoded (pre, add, del) probabilities."""
        decoded = self.decode(self.leaves())
        return {
            name: np.stack([v.value for v in decoded[name]], axis=1)
            for name in self.schema_names
        }

    def to_action_model(self) -> LiftedModel:
        """Threshold decoded rows at 0.5; always yields a valid model."""
        pre: dict[str, frozenset] = {}
        add: dict[str, frozenset] = {}
        delete: dict[str, frozenset] = {}
        for name, arr in self.decoded_arrays().items():
            rows = self.rows[name]
            pre[name] = frozenset(r for i, r in enumerate(rows) if arr[i, 0] > 0.5)
            add[name] = frozenset(r for i, r in enumerate(rows) if arr[i, 1] > 0.5)
            delete[name] = frozenset(r for i, r in enumerate(rows) if arr[i, 2] > 0.5)
        return LiftedModel(self.domain, pre, add, delete)


class GroundLink:
    """Flat copy-map from lifted rows to grounded (action, proposition) slots.

    Grounding copies the lifted value of a bound predicate to the one
    proposition it instantiates under each action. The source and target
    index arrays are fixed by the instance, so grounding all actions is a
    single gather plus scatter regardless of size.
    """

    def __init__(self, table: CaseTable, idx: GroundIndex):
        self.idx = idx
        self.table = table
        self.offsets: dict[str, int] = {}
        total = 0
        for name in table.schema_names:
            self.offsets[name] = total
            total += len(table.rows[name])
        self.total_rows = total

        row_of = {
            name: {pbp: r for r, pbp in enumerate(table.rows[name])}
            for name in table.schema_names
        }
        src: list[int] = []
        dst: list[int] = []
        for ai, act in enumerate(idx.acts):
            name = act.schema.name
            for pbp, pi in idx.lift_maps[ai].items():
                src.append(self.offsets[name] + row_of[name][pbp])
                dst.append(ai * idx.n_props + pi)
        self.src = np.asarray(src, dtype=np.intp)
        self.dst = np.asarray(dst, dtype=np.intp)

    def _grid(self, lifted: ad.Var) -> ad.Var:
        flat = ad.scatter_combine(
            ad.gather(lifted, self.src), self.dst, self.idx.n_acts * self.idx.n_props
        )
        return ad.reshape(flat, (self.idx.n_acts, self.idx.n_props))

    def ground_all(
        self, decoded: dict[str, tuple[ad.Var, ad.Var, ad.Var]]
    ) -> tuple[ad.Var, ad.Var, ad.Var]:
        """Grounded pre/add/del matrices of shape (|A_I|, |P_I|)."""
        names = self.table.schema_names
        pre = ad.concat([decoded[n][0] for n in names])
        add = ad.concat([decoded[n][1] for n in names])
        delete = ad.concat([decoded[n][2] for n in names])
        return self._grid(pre), self._grid(add), self._grid(delete)


def _as_var(x) -> ad.Var:
    return x if isinstance(x, ad.Var) else ad.const(x)


def prob_successor(ps, add_a, del_a) -> ad.Var:
    """Predicted next state: ps*(1-del) + (1-ps)*add, broadcasting freely."""
    ps = _as_var(ps)
    add_a = _as_var(add_a)
    del_a = _as_var(del_a)
    return ps * (1.0 - del_a) + (1.0 - ps) * add_a


def loss_pred(ps_t, ps_next, add_a, del_a) -> ad.Var:
    """Mean squared gap between the inferred and observed next state."""
    diff = prob_successor(ps_t, add_a, del_a) - _as_var(ps_next)
    return ad.vmean(diff * diff, axis=-1)


def loss_app(ps_t, pre_a) -> ad.Var:
    """Preconditions demanded but not held, squared and averaged."""
    v = _as_var(pre_a) * (1.0 - _as_var(ps_t))
    return ad.vmean(v * v, axis=-1)


def loss_bias(pre_a) -> ad.Var:
    """Distance of the precondition vector from all-ones."""
    d = _as_var(pre_a) - 1.0
    return ad.vmean(d * d, axis=-1)


def model_loss(ps_t, ps_next, pre_a, add_a, del_a, lam: float) -> ad.Var:
    """Per-action training loss: prediction + applicability + lam * bias."""
    return (
        loss_pred(ps_t, ps_next, add_a, del_a)
        + loss_app(ps_t, pre_a)
        + lam * loss_bias(pre_a)
    )


def case_ce(
    case_probs: dict[str, ad.Var], target_cases: dict[str, np.ndarray], floor: float = 1e-12
) -> ad.Var:
    """Cross-entropy against target cases, averaged over all rows."""
    parts = []
    for name in sorted(target_cases):
        probs = case_probs[name]
        targets = np.asarray(target_cases[name], dtype=np.intp) - 1
        flat = ad.reshape(ad.log(ad.clip(probs, floor, 1.0)), (-1,))
        idx = np.arange(targets.size) * 4 + targets
        parts.append(ad.gather(flat, idx))
    all_logs = ad.concat(parts)
    return -ad.vmean(all_logs)


TABLE_SCHEMA = "case-table/1"


def write_case_table(path, table: CaseTable) -> None:
    """Line-delimited JSON: a header line, then one record per schema."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": TABLE_SCHEMA, "domain": table.domain.name}) + "\n")
        for name in table.schema_names:
            probs = softmax_rows(table.params[f"case/{name}"])
            fh.write(json.dumps({"name": name, "cases": probs.tolist()}) + "\n")


def read_case_table(path, domain: Domain, floor: float = 1e-12) -> CaseTable:
    """Rebuild a table whose case probabilities match the file.

    Logits are recovered as log of the clamped probabilities; softmax of a
    log-probability row reproduces the row, so saturated tables survive a
    round trip to the precision the clamp allows.
    """
    table = CaseTable(domain)
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != TABLE_SCHEMA:
            raise ValueError(f"not a case table file: {path}")
        if header.get("domain") != domain.name:
            raise ValueError(
                f"table was written for domain {header.get('domain')!r}, not {domain.name!r}"
            )
        seen = set()
        for line in fh:
            rec = json.loads(line)
            name = rec["name"]
            if name not in table.rows:
                raise ValueError(f"unknown schema {name!r} in table file")
            cases = np.asarray(rec["cases"], dtype=np.float64)
            if cases.shape != (len(table.rows[name]), 4):
                raise ValueError(f"case rows for {name!r} do not match the domain")
            table.params[f"case/{name}"][...] = np.log(np.clip(cases, floor, 1.0))
            seen.add(name)
    missing = set(table.schema_names) - seen
    if missing:
        raise ValueError(f"table file lacks schemas: {sorted(missing)}")
    return table


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
