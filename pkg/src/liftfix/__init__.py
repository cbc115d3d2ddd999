"""Lifted STRIPS action-model learning from unlabeled noisy state traces.

The package couples differentiable surrogate predictors (state, action,
lifted model) with an exact 0/1 program that repairs their outputs into a
logically consistent trace and model, then feeds the repaired assignment
back into training as pseudo-labels.
"""

__version__ = "0.1.0"
