"""Oblique decision trees with probabilistic routing, for classification and regression.

A maximal binary tree of fixed depth routes each individual left at branch
``t`` with probability ``F(a_t . x / p - mu_t)`` for a logistic CDF ``F``.
Training minimizes the expected misclassification cost over the oblique
split parameters and the leaf labels, optionally subject to lower bounds on
per-class expected correct classification rates.
"""
from .assignment import InfeasibleTopologyError, assignment_costs, solve_assignment, solve_labels
from .data import DataError, encode_and_scale, ingest_csv, repeated_split
from .evaluation import benchmark, evaluate, greedy_baseline, heatmap_grid, importance, rho_sweep
from .gradients import objective_gradient, performance_gradient
from .model import (
    Dataset,
    LogisticCdf,
    RegressionModel,
    SplitParameters,
    TrainedModel,
    expected_cost,
    leaf_probabilities,
    load_model,
)
from .regression import orrt_objective, solve_leaf_values, train_orrt
from .topology import TreeTopology, build_topology
from .trainer import NumericalFailure, TrainConfig, train, train_constrained

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "InfeasibleTopologyError", "LogisticCdf", "NumericalFailure",
    "RegressionModel", "SplitParameters", "TrainConfig", "TrainedModel", "TreeTopology",
    "assignment_costs", "benchmark", "build_topology", "encode_and_scale", "evaluate",
    "expected_cost", "greedy_baseline", "heatmap_grid", "importance", "ingest_csv",
    "leaf_probabilities", "load_model", "objective_gradient", "orrt_objective",
    "performance_gradient", "repeated_split", "rho_sweep", "solve_assignment", "solve_labels",
    "solve_leaf_values", "train", "train_constrained", "train_orrt",
]
