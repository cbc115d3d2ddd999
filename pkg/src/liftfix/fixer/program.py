"""Exact 0/1 program tying trace explanations to a shared lifted model.

Variables per trace: hol[t, p] for every time step including the fixed
endpoints, act[t, a], and step indicators stepadd/stepdel/steppre[t, p] for
propositions some action can affect. Shared across traces: pre/add/del bits
per (schema, bound predicate) row. The objective rewards agreement with the
soft predictions, term family by term family, plus a precondition prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..strips.ground import GroundIndex

MASKS = ("state", "state+action", "all")

BIG = 10**9


def _check_unit_interval(name: str, arr: np.ndarray) -> None:
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class TraceObs:
    """Soft observations of one trace plus its exact endpoints.

    obs_props covers all T+1 states (endpoint columns are just the bits);
    obs_acts covers the T steps.
    """

    trace_id: str
    obs_props: np.ndarray
    obs_acts: np.ndarray
    initial: np.ndarray
    final: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "obs_props", np.asarray(self.obs_props, dtype=np.float64))
        object.__setattr__(self, "obs_acts", np.asarray(self.obs_acts, dtype=np.float64))
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=bool))
        object.__setattr__(self, "final", np.asarray(self.final, dtype=bool))
        if self.obs_props.ndim != 2 or self.obs_acts.ndim != 2:
            raise ValueError("observations must be 2-d (time, symbol) arrays")
        if self.obs_props.shape[0] != self.obs_acts.shape[0] + 1:
            raise ValueError("need exactly one more state row than action rows")
        if self.initial.shape != self.final.shape or self.initial.ndim != 1:
            raise ValueError("endpoint states must be matching bitvectors")
        if self.obs_props.shape[1] != self.initial.shape[0]:
            raise ValueError("state observation width disagrees with endpoints")
        _check_unit_interval("obs_props", self.obs_props)
        _check_unit_interval("obs_acts", self.obs_acts)

    @property
    def steps(self) -> int:
        return self.obs_acts.shape[0]


@dataclass(frozen=True)
class FixProblem:
    """Input to one repair round.

    model_probs holds, per schema, a (rows, 3) array of decoded
    (pre, add, del) probabilities in bound-predicate row order. mask picks
    which agreement families enter the objective; the precondition prior
    stays on in every configuration.
    """

    traces: tuple[TraceObs, ...]
    model_probs: dict[str, np.ndarray]
    lam: float = 0.4
    mask: str = "all"
    time_limit: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if self.mask not in MASKS:
            raise ValueError(f"mask must be one of {MASKS}")
        ids = [tr.trace_id for tr in self.traces]
        if len(set(ids)) != len(ids):
            raise ValueError("trace ids must be unique")
        for name, arr in self.model_probs.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise ValueError(f"model_probs[{name!r}] must be (rows, 3)")
            _check_unit_interval(f"model_probs[{name!r}]", arr)
            self.model_probs[name] = arr


@dataclass
class VarMap:
    """Variable ids by role; -1 marks step slots that were never created."""

    model: dict[str, np.ndarray]
    hol: dict[str, np.ndarray]
    act: dict[str, np.ndarray]
    step: dict[str, np.ndarray]


class Program:
    """maximize obj . x subject to lo <= sum(coef * x) <= hi per row, x binary."""

    def __init__(self):
        self.names: list[str] = []
        self.objective: list[float] = []
        self.rows: list[tuple[np.ndarray, np.ndarray, int, int]] = []
        self.watch: list[list[tuple[int, int]]] = []
        self.branch_order: list[int] = []
        # (pre, add, del) variable triples; the solver bounds each triple
        # jointly over its four admissible bit patterns
        self.groups: list[tuple[int, int, int]] = []
        self.vars: VarMap | None = None

    @property
    def n(self) -> int:
        return len(self.names)

    def new_var(self, name: str, coef: float) -> int:
        self.names.append(name)
        self.objective.append(float(coef))
        self.watch.append([])
        return len(self.names) - 1

    def add_row(self, idx: list[int], coef: list[int], lo: int, hi: int) -> None:
        r = len(self.rows)
        self.rows.append((np.asarray(idx, dtype=np.intp), np.asarray(coef, dtype=np.int64), lo, hi))
        for v, c in zip(idx, coef):
            self.watch[v].append((r, int(c)))

    def finish(self) -> None:
        self.objective_arr = np.asarray(self.objective, dtype=np.float64)


def build(problem: FixProblem, idx: GroundIndex) -> Program:
    """Assemble the program for the given grounding.

    Endpoint states enter as equality rows on their hol variables, so the
    objective reported by the solver includes the (constant) endpoint
    agreement terms.
    """
    domain = idx.domain
    n_props, n_acts = idx.n_props, idx.n_acts
    schema_names = sorted(s.name for s in domain.schemas)
    rows_of = {name: domain.bound_predicates(domain.schema(name)) for name in schema_names}
    for name in schema_names:
        got = problem.model_probs.get(name)
        if got is None or got.shape[0] != len(rows_of[name]):
            raise ValueError(f"model_probs missing or misshapen for schema {name!r}")

    with_act = problem.mask in ("state+action", "all")
    with_model = problem.mask == "all"
    prog = Program()

    model_vars: dict[str, np.ndarray] = {}
    for name in schema_names:
        probs = problem.model_probs[name]
        ids = np.empty((len(rows_of[name]), 3), dtype=np.intp)
        for r, pbp in enumerate(rows_of[name]):
            agree = (2.0 * probs[r] - 1.0) if with_model else np.zeros(3)
            ids[r, 0] = prog.new_var(f"pre[{name},{r}]", agree[0] + problem.lam)
            ids[r, 1] = prog.new_var(f"add[{name},{r}]", agree[1])
            ids[r, 2] = prog.new_var(f"del[{name},{r}]", agree[2])
            prog.add_row([ids[r, 0], ids[r, 1]], [1, 1], -BIG, 1)
            prog.add_row([ids[r, 2], ids[r, 0]], [1, -1], -BIG, 0)
            prog.groups.append((int(ids[r, 0]), int(ids[r, 1]), int(ids[r, 2])))
        model_vars[name] = ids

    # (schema, bound predicate) -> flat position in the model var table
    row_number = {
        name: {pbp: r for r, pbp in enumerate(rows_of[name])} for name in schema_names
    }
    # per proposition: (action, pre-var, add-var, del-var) for each actor,
    # resolved through the inverse lift map (injective bindings make it one)
    inv_lift = [{pi: bp for bp, pi in m.items()} for m in idx.lift_maps]
    actor_links: list[list[tuple[int, int, int, int]]] = []
    for p in range(n_props):
        entries = []
        for ai, _ in idx.actors[p]:
            name = idx.acts[ai].schema.name
            r = row_number[name][inv_lift[ai][p]]
            vpre, vadd, vdel = model_vars[name][r]
            entries.append((ai, vpre, vadd, vdel))
        actor_links.append(entries)

    hol_vars: dict[str, np.ndarray] = {}
    act_vars: dict[str, np.ndarray] = {}
    step_vars: dict[str, np.ndarray] = {}
    act_branch: list[int] = []

    for tr in problem.traces:
        if tr.initial.shape[0] != n_props or tr.obs_acts.shape[1] != n_acts:
            raise ValueError(f"trace {tr.trace_id!r} does not match the grounding")
        T = tr.steps
        hol = np.empty((T + 1, n_props), dtype=np.intp)
        for t in range(T + 1):
            for p in range(n_props):
                hol[t, p] = prog.new_var(
                    f"hol[{tr.trace_id},{t},{p}]", 2.0 * tr.obs_props[t, p] - 1.0
                )
        act = np.empty((T, n_acts), dtype=np.intp)
        for t in range(T):
            for a in range(n_acts):
                coef = (2.0 * tr.obs_acts[t, a] - 1.0) if with_act else 0.0
                act[t, a] = prog.new_var(f"act[{tr.trace_id},{t},{a}]", coef)
            act_branch.extend(act[t])
            prog.add_row(list(act[t]), [1] * n_acts, 1, 1)

        step = np.full((T, n_props, 3), -1, dtype=np.intp)
        for t in range(T):
            for p in range(n_props):
                if not idx.actors[p]:
                    # nothing can touch p: its truth value is frozen in time
                    prog.add_row([hol[t + 1, p], hol[t, p]], [1, -1], 0, 0)
                    continue
                sadd = prog.new_var(f"stepadd[{tr.trace_id},{t},{p}]", 0.0)
                sdel = prog.new_var(f"stepdel[{tr.trace_id},{t},{p}]", 0.0)
                spre = prog.new_var(f"steppre[{tr.trace_id},{t},{p}]", 0.0)
                step[t, p] = (sadd, sdel, spre)
                actor_acts = [act[t, ai] for ai, *_ in actor_links[p]]
                for ai, vpre, vadd, vdel in actor_links[p]:
                    av = act[t, ai]
                    for svar, mvar in ((sadd, vadd), (sdel, vdel), (spre, vpre)):
                        prog.add_row([svar, mvar, av], [1, -1, 1], -BIG, 1)
                        prog.add_row([svar, mvar, av], [1, -1, -1], -1, BIG)
                for svar in (sadd, sdel, spre):
                    prog.add_row([svar, *actor_acts], [1] + [-1] * len(actor_acts), -BIG, 0)
                prog.add_row([hol[t + 1, p], sadd], [1, -1], 0, BIG)
                prog.add_row([hol[t + 1, p], sdel], [1, 1], -BIG, 1)
                prog.add_row([hol[t, p], spre], [1, -1], 0, BIG)
                prog.add_row([sadd, hol[t + 1, p], hol[t, p]], [1, -1, 1], 0, BIG)
                prog.add_row([sdel, hol[t, p], hol[t + 1, p]], [1, -1, 1], 0, BIG)

        for p in range(n_props):
            prog.add_row([hol[0, p]], [1], int(tr.initial[p]), int(tr.initial[p]))
            prog.add_row([hol[T, p]], [1], int(tr.final[p]), int(tr.final[p]))

        hol_vars[tr.trace_id] = hol
        act_vars[tr.trace_id] = act
        step_vars[tr.trace_id] = step

    prog.vars = VarMap(model=model_vars, hol=hol_vars, act=act_vars, step=step_vars)

    # act choices first (time-major), then the interior states, then model
    # bits. Interior states before model bits matters: their bound slack is
    # consumed high in the tree, so the tie-heavy model suffix prunes at
    # equality instead of doubling. Step variables are a dead safety net,
    # propagation pins them once acts and states are down.
    order = list(act_branch)
    for tr in problem.traces:
        hol = hol_vars[tr.trace_id]
        for t in range(1, tr.steps):
            order.extend(hol[t])
    for name in schema_names:
        order.extend(model_vars[name].reshape(-1))
    chosen = set(order)
    order.extend(v for v in range(prog.n) if v not in chosen)
    prog.branch_order = order
    prog.finish()
    return prog
