"""Exact depth-first branch-and-bound over the 0/1 repair program.

Search state lives on a trail so backtracking is a pure undo. Propagation is
bound-consistency on the row activities: fixing a variable tightens every row
it appears in, and any variable whose remaining values all violate a row gets
forced. Branching follows the program's order (acts, interior states, model
bits); values are tried objective-best-first.

The bound sums a best-case term per entity: free-standing variables
contribute max(coef, 0), and each (pre, add, del) triple contributes the best
of its four admissible bit patterns given whatever members are already fixed.
Bounding the triple jointly matters: counting add and del separately would
credit combinations the validity constraints forbid, and that slack is what
lets tied subtrees multiply instead of pruning at equality. On a fully fixed
assignment the bound collapses to the exact objective.

Determinism: the budget counts branch decisions, not seconds, so a "time
limit" means the same thing on every machine and in every rerun.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .program import FixProblem, Program, build

# measured on adversarial dense programs (~600 vars, ~4k rows); informative
# observations solve in far fewer nodes, so real solves finish early
NODES_PER_SECOND = 2_500

# subtrees are cut when they cannot beat the incumbent by more than this;
# it absorbs the float residue between the incremental bound and a leaf's
# recomputed objective, which would otherwise keep zero-gain ties open, and
# it caps how far a reported optimum can sit below the true one
TIE_EPS = 1e-9

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout-no-solution"


@dataclass(frozen=True)
class RawSolution:
    status: str
    assignment: np.ndarray | None
    objective: float | None
    bound: float
    nodes: int


@dataclass(frozen=True)
class FixResult:
    """Decoded repair: per-trace grids plus the shared model bits."""

    status: str
    objective: float | None
    bound: float
    nodes: int
    hol: dict[str, np.ndarray]
    act: dict[str, np.ndarray]
    model_bits: dict[str, np.ndarray]

    def has_assignment(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


# the four bit patterns a (pre, add, del) triple admits
_CASES = ((0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 0, 1))


class _Search:
    """Trail-based assignment state over one program."""

    def __init__(self, prog: Program):
        self.obj = [float(c) for c in prog.objective]
        self.best_case = [max(c, 0.0) for c in self.obj]
        self.fixed: list[int] = [-1] * prog.n
        # (var, bound before, group term before); restoring the stored floats
        # on undo keeps the bound bit-exact no matter how long the search runs
        self.trail: list[tuple[int, float, float]] = []
        self.watch = prog.watch
        self.row_idx: list[list[int]] = []
        self.row_coef: list[list[int]] = []
        self.row_lo: list[int] = []
        self.row_hi: list[int] = []
        self.min_act: list[int] = []
        self.max_act: list[int] = []
        for idx, coef, lo, hi in prog.rows:
            ii = [int(v) for v in idx]
            cc = [int(c) for c in coef]
            self.row_idx.append(ii)
            self.row_coef.append(cc)
            self.row_lo.append(lo)
            self.row_hi.append(hi)
            self.min_act.append(sum(c for c in cc if c < 0))
            self.max_act.append(sum(c for c in cc if c > 0))
        self.groups = list(prog.groups)
        self.group_of: list[int] = [-1] * prog.n
        for g, members in enumerate(self.groups):
            for v in members:
                self.group_of[v] = g
        self.term: list[float] = [self._group_term(g) for g in range(len(self.groups))]
        singles = [bc for v, bc in enumerate(self.best_case) if self.group_of[v] == -1]
        self.bound = math.fsum(singles + self.term)

    def _group_term(self, g: int) -> float | None:
        """Best objective the triple can still reach; None when no pattern
        fits the fixed members (the validity rows fail on the same states)."""
        vp, va, vd = self.groups[g]
        fp, fa, fd = self.fixed[vp], self.fixed[va], self.fixed[vd]
        op, oa, od = self.obj[vp], self.obj[va], self.obj[vd]
        best = None
        for cp, ca, cd in _CASES:
            if (fp != -1 and fp != cp) or (fa != -1 and fa != ca) or (fd != -1 and fd != cd):
                continue
            v = cp * op + ca * oa + cd * od
            if best is None or v > best:
                best = v
        return best

    def _scan_row(self, r: int, queue: list[tuple[int, int]]) -> bool:
        """Enqueue forced values in row r; False on a dead row."""
        lo, hi = self.row_lo[r], self.row_hi[r]
        mn, mx = self.min_act[r], self.max_act[r]
        if mn > hi or mx < lo:
            return False
        fixed = self.fixed
        for w, d in zip(self.row_idx[r], self.row_coef[r]):
            if fixed[w] != -1:
                continue
            lo_d, hi_d = (d, 0) if d < 0 else (0, d)
            # value 1 puts contribution d in place of [lo_d, hi_d]
            bad1 = mn - lo_d + d > hi or mx - hi_d + d < lo
            bad0 = mn - lo_d > hi or mx - hi_d < lo
            if bad1 and bad0:
                return False
            if bad1:
                queue.append((w, 0))
            elif bad0:
                queue.append((w, 1))
        return True

    def assign(self, v: int, val: int) -> bool:
        """Fix v := val and propagate; False on conflict (state stays dirty,
        callers must undo to their mark either way)."""
        queue: list[tuple[int, int]] = [(v, val)]
        qi = 0
        while qi < len(queue):
            u, x = queue[qi]
            qi += 1
            f = self.fixed[u]
            if f == x:
                continue
            if f == 1 - x:
                return False
            self.fixed[u] = x
            g = self.group_of[u]
            prev_term = self.term[g] if g >= 0 else 0.0
            self.trail.append((u, self.bound, prev_term))
            # apply every activity update before any early exit: undo_to
            # reverses all of watch[u], so a partial application here would
            # leave the cached row activities permanently skewed
            for r, c in self.watch[u]:
                if x == 1:
                    if c < 0:
                        self.max_act[r] += c
                    else:
                        self.min_act[r] += c
                else:
                    if c < 0:
                        self.min_act[r] -= c
                    else:
                        self.max_act[r] -= c
            if g >= 0:
                new = self._group_term(g)
                if new is None:
                    # bound and term untouched; undo restores the same values
                    return False
                self.bound += new - prev_term
                self.term[g] = new
            else:
                self.bound -= self.best_case[u] - self.obj[u] * x
            for r, _ in self.watch[u]:
                if not self._scan_row(r, queue):
                    return False
        return True

    def undo_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            u, prev_bound, prev_term = self.trail.pop()
            x = self.fixed[u]
            self.fixed[u] = -1
            g = self.group_of[u]
            if g >= 0:
                self.term[g] = prev_term
            self.bound = prev_bound
            for r, c in self.watch[u]:
                if x == 1:
                    if c < 0:
                        self.max_act[r] -= c
                    else:
                        self.min_act[r] -= c
                else:
                    if c < 0:
                        self.min_act[r] += c
                    else:
                        self.max_act[r] += c

    def propagate_root(self) -> bool:
        queue: list[tuple[int, int]] = []
        for r in range(len(self.row_idx)):
            if not self._scan_row(r, queue):
                return False
        for u, x in queue:
            if not self.assign(u, x):
                return False
        return True

    def exact_objective(self) -> float:
        return float(sum(c * f for c, f in zip(self.obj, self.fixed) if f == 1))


class _Frame:
    __slots__ = ("var", "values", "vi", "mark", "cursor", "bound_at_entry")

    def __init__(self, var: int, values: tuple[int, int], mark: int, cursor: int, bound: float):
        self.var = var
        self.values = values
        self.vi = 0
        self.mark = mark
        self.cursor = cursor
        self.bound_at_entry = bound


def solve_program(prog: Program, budget: int) -> RawSolution:
    """Run the search for at most `budget` branch decisions."""
    s = _Search(prog)
    root_bound = s.bound
    if budget <= 0:
        return RawSolution(TIMEOUT, None, None, root_bound, 0)
    if not s.propagate_root():
        return RawSolution(INFEASIBLE, None, None, float("-inf"), 0)

    order = prog.branch_order
    n_order = len(order)

    def next_cursor(cur: int) -> int:
        fixed = s.fixed
        while cur < n_order and fixed[order[cur]] != -1:
            cur += 1
        return cur

    def frame_at(cur: int) -> _Frame:
        v = order[cur]
        values = (1, 0) if s.obj[v] > 0 else (0, 1)
        return _Frame(v, values, len(s.trail), cur, s.bound)

    incumbent: np.ndarray | None = None
    inc_val = float("-inf")
    nodes = 0
    aborted = False

    cur = next_cursor(0)
    if cur == n_order:
        val = s.exact_objective()
        return RawSolution(OPTIMAL, np.asarray(s.fixed, dtype=np.int8), val, val, 0)

    frames = [frame_at(cur)]
    while frames:
        fr = frames[-1]
        # every iteration starts from the frame's own slate; this also clears
        # whatever a popped child or a failed sibling value left on the trail
        s.undo_to(fr.mark)
        if fr.vi >= 2:
            frames.pop()
            continue
        if nodes >= budget:
            aborted = True
            break
        nodes += 1
        val = fr.values[fr.vi]
        fr.vi += 1
        if not s.assign(fr.var, val) or s.bound <= inc_val + TIE_EPS:
            continue
        cur = next_cursor(fr.cursor)
        if cur == n_order:
            exact = s.exact_objective()
            if exact > inc_val:
                inc_val = exact
                incumbent = np.asarray(s.fixed, dtype=np.int8)
        else:
            frames.append(frame_at(cur))

    if aborted:
        open_bounds = [fr.bound_at_entry for fr in frames]
        best_open = max(open_bounds) if open_bounds else root_bound
        if incumbent is None:
            return RawSolution(TIMEOUT, None, None, best_open, nodes)
        return RawSolution(FEASIBLE, incumbent, inc_val, max(best_open, inc_val), nodes)
    if incumbent is None:
        return RawSolution(INFEASIBLE, None, None, float("-inf"), nodes)
    return RawSolution(OPTIMAL, incumbent, inc_val, inc_val, nodes)


def decode(prog: Program, raw: RawSolution) -> FixResult:
    hol: dict[str, np.ndarray] = {}
    act: dict[str, np.ndarray] = {}
    bits: dict[str, np.ndarray] = {}
    if raw.assignment is not None:
        x = raw.assignment
        for tid, grid in prog.vars.hol.items():
            hol[tid] = x[grid].astype(np.int8)
        for tid, grid in prog.vars.act.items():
            act[tid] = x[grid].astype(np.int8)
        for name, grid in prog.vars.model.items():
            bits[name] = x[grid].astype(np.int8)
    return FixResult(
        status=raw.status,
        objective=raw.objective,
        bound=raw.bound,
        nodes=raw.nodes,
        hol=hol,
        act=act,
        model_bits=bits,
    )


def fix(problem: FixProblem, idx, nodes_per_second: int = NODES_PER_SECOND) -> FixResult:
    """Build, solve within the problem's (deterministic) time limit, decode."""
    prog = build(problem, idx)
    budget = int(problem.time_limit * nodes_per_second)
    return decode(prog, solve_program(prog, budget))
