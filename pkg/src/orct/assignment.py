"""Exact leaf labeling for fixed splits.

For fixed ``(a, mu)`` the expected cost is linear in ``C``; minimizing it
subject to one class per leaf and at least one leaf per class is a
transportation problem with an integral optimum.  It is solved exactly by
picking, for every class, one distinct representative leaf (a rectangular
assignment problem over the regret ``q[k, t] - min_k' q[k', t]``) and
labeling every other leaf with its cheapest class.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import (
    Dataset,
    LogisticCdf,
    SplitParameters,
    assignment_costs_from_leaves,
    check_costs,
    forward,
)
from .topology import TreeTopology


class InfeasibleTopologyError(ValueError):
    """More classes than leaves while every class must label a leaf."""


def assignment_costs(data: Dataset, params: SplitParameters, W, topology: TreeTopology,
                     cdf: LogisticCdf) -> np.ndarray:
    """Coefficients ``q[k, t]`` of the cost as a linear function of ``C``."""
    W = check_costs(W, data.n_classes)
    leaves = forward(data.X, params, topology, cdf).leaves
    return assignment_costs_from_leaves(leaves, data.y, W)


def labels_to_assignment(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    C = np.zeros((n_classes, labels.size))
    C[labels, np.arange(labels.size)] = 1.0
    return C


def solve_labels(q, coverage: bool = True) -> np.ndarray:
    """Optimal class position for each leaf."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.all(np.isfinite(q)):
        raise ValueError("assignment costs must be finite")
    n_classes, n_leaves = q.shape
    labels = np.argmin(q, axis=0)
    if not coverage:
        return labels
    if n_classes > n_leaves:
        raise InfeasibleTopologyError(
            f"{n_classes} classes cannot each label one of {n_leaves} leaves")
    if np.unique(labels).size == n_classes:
        return labels
    regret = q - q[labels, np.arange(n_leaves)]
    rows, cols = linear_sum_assignment(regret)
    labels = labels.copy()
    labels[cols] = rows
    return labels


def solve_assignment(q, coverage: bool = True) -> np.ndarray:
    """Optimal 0/1 assignment matrix for the linear costs ``q``."""
    q = np.asarray(q, dtype=float)
    return labels_to_assignment(solve_labels(q, coverage), q.shape[0])
