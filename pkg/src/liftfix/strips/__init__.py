"""Typed STRIPS core: domains, grounding, semantics, traces, PDDL I/O."""

from .types import (
    ActionSchema,
    Domain,
    DomainError,
    Instance,
    LiftedModel,
    ParameterBinding,
    ParameterBoundPredicate,
    Predicate,
    TypeTree,
    binding_is_valid,
    enumerate_param_bindings,
)
from .ground import GroundAction, GroundIndex, Proposition, ground
from .semantics import (
    GroundModel,
    InapplicableError,
    applicable,
    ground_action_model,
    successor,
    trace_consistent,
)
from .traces import (
    DeadEndError,
    StateTrace,
    enumerate_consistent_traces,
    random_walk,
)
from .pddl import PddlError, parse_domain, parse_problem, write_domain

__all__ = [
    "ActionSchema",
    "DeadEndError",
    "Domain",
    "DomainError",
    "GroundAction",
    "GroundIndex",
    "GroundModel",
    "InapplicableError",
    "Instance",
    "LiftedModel",
    "ParameterBinding",
    "ParameterBoundPredicate",
    "PddlError",
    "Predicate",
    "Proposition",
    "StateTrace",
    "TypeTree",
    "applicable",
    "binding_is_valid",
    "enumerate_consistent_traces",
    "enumerate_param_bindings",
    "ground",
    "ground_action_model",
    "parse_domain",
    "parse_problem",
    "random_walk",
    "successor",
    "trace_consistent",
    "write_domain",
]
