"""Exact 0/1 repair of predicted states, actions, and model bits."""

from .align import (
    Permutation,
    act_column_map,
    align_permutation,
    apply_permutation,
    count_permutations,
    model_agreement,
    permute_model_bits,
    valid_permutations,
)
from .checker import check_result, objective_value
from .labels import PseudoLabelSet, extract_pseudo_labels, model_from_bits
from .program import MASKS, FixProblem, TraceObs, build
from .solver import FEASIBLE, INFEASIBLE, OPTIMAL, TIMEOUT, FixResult, fix, solve_program

__all__ = [
    "MASKS",
    "OPTIMAL",
    "FEASIBLE",
    "INFEASIBLE",
    "TIMEOUT",
    "TraceObs",
    "FixProblem",
    "FixResult",
    "build",
    "solve_program",
    "fix",
    "check_result",
    "objective_value",
    "PseudoLabelSet",
    "extract_pseudo_labels",
    "model_from_bits",
    "Permutation",
    "act_column_map",
    "valid_permutations",
    "count_permutations",
    "permute_model_bits",
    "apply_permutation",
    "align_permutation",
    "model_agreement",
]
