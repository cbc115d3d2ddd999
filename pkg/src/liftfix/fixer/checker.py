"""Independent verification of repair solutions.

Nothing here is shared with the program builder: the checks go back to the
planning core, so an encoding bug and a checking bug would have to agree
before a broken solution slips through.
"""

from __future__ import annotations

import numpy as np

from ..strips.ground import GroundIndex
from ..strips.semantics import GroundModel, trace_consistent
from ..strips.types import DomainError
from .labels import model_from_bits
from .program import FixProblem
from .solver import FixResult


def check_result(problem: FixProblem, idx: GroundIndex, result: FixResult) -> list[str]:
    """All violations found, as human-readable strings; empty means valid.

    Statuses without an assignment have nothing to check and pass trivially.
    """
    if not result.has_assignment():
        return []
    errors: list[str] = []

    try:
        model = model_from_bits(idx.domain, result.model_bits)
    except (DomainError, ValueError) as exc:
        return [f"model bits invalid: {exc}"]
    gm = GroundModel(model, idx)

    expected = {tr.trace_id for tr in problem.traces}
    if set(result.hol) != expected or set(result.act) != expected:
        errors.append("solution traces do not match the problem traces")
        return errors

    for tr in problem.traces:
        tid = tr.trace_id
        hol = result.hol[tid]
        act = result.act[tid]
        if hol.shape != (tr.steps + 1, idx.n_props) or act.shape != (tr.steps, idx.n_acts):
            errors.append(f"{tid}: solution grids have the wrong shape")
            continue
        if not np.array_equal(hol[0], tr.initial):
            errors.append(f"{tid}: repaired start state differs from the observed one")
        if not np.array_equal(hol[-1], tr.final):
            errors.append(f"{tid}: repaired end state differs from the observed one")
        for t in range(tr.steps):
            if act[t].sum() != 1:
                errors.append(f"{tid}: step {t} does not select exactly one action")
                continue
            ai = int(np.argmax(act[t]))
            s = hol[t].astype(bool)
            if not gm.applicable(s, ai):
                errors.append(f"{tid}: step {t} action {idx.acts[ai]} is inapplicable")
                continue
            if not np.array_equal(gm.successor(s, ai), hol[t + 1].astype(bool)):
                errors.append(f"{tid}: step {t} successor mismatch for {idx.acts[ai]}")
        ok, _ = trace_consistent(hol.astype(bool), model, idx)
        if not ok:
            errors.append(f"{tid}: repaired states are not trace consistent")
    return errors


def objective_value(problem: FixProblem, idx: GroundIndex, result: FixResult) -> float:
    """Re-evaluate the objective by direct summation over the solution.

    Mirrors the encoding's conventions: endpoint agreement terms are part of
    the total, the precondition prior is always on, and the mask decides
    which agreement families count.
    """
    if not result.has_assignment():
        raise ValueError("no assignment to evaluate")
    with_act = problem.mask in ("state+action", "all")
    with_model = problem.mask == "all"

    total = 0.0
    for name in sorted(result.model_bits):
        bits = result.model_bits[name]
        probs = problem.model_probs[name]
        if with_model:
            total += float(np.sum((2.0 * probs - 1.0) * bits))
        total += problem.lam * float(np.sum(bits[:, 0]))
    for tr in problem.traces:
        total += float(np.sum((2.0 * tr.obs_props - 1.0) * result.hol[tr.trace_id]))
        if with_act:
            total += float(np.sum((2.0 * tr.obs_acts - 1.0) * result.act[tr.trace_id]))
    return total
