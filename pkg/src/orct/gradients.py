"""Analytic first derivatives of the expected cost and per-class performance.

Both functions are of the form ``sum_i sum_t P[i, t] G[i, t]`` for a fixed
leaf weight matrix ``G``.  The derivative with respect to the left-branch
probability at branch ``s`` is ``reach(s) * (V(2s) - V(2s+1))`` where
``V(node)`` is the expected leaf weight below ``node`` given that it is
reached; ``V`` is aggregated bottom-up after the downward pass in
:func:`orct.model.forward`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Dataset,
    Forward,
    LogisticCdf,
    SplitParameters,
    assignment_costs_from_leaves,
    check_costs,
    forward,
)
from .topology import TreeTopology


@dataclass
class GradientBundle:
    d_a: np.ndarray
    d_mu: np.ndarray
    d_c: np.ndarray

    def max_abs(self) -> float:
        return max(np.max(np.abs(self.d_a)), np.max(np.abs(self.d_mu)))


def split_gradient(X: np.ndarray, fwd: Forward, G: np.ndarray, topology: TreeTopology,
                   cdf: LogisticCdf) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``sum_{i,t} P[i, t] G[i, t]`` with respect to ``(a, mu)``."""
    n, p = X.shape
    d_branch = np.empty((n, topology.n_branch))
    value = G
    for d in range(topology.depth - 1, -1, -1):
        lo = 2 ** d - 1
        p_lvl = fwd.branch[:, lo:lo + 2 ** d]
        left, right = value[:, 0::2], value[:, 1::2]
        d_branch[:, lo:lo + 2 ** d] = fwd.reach[d] * (left - right)
        value = p_lvl * left + (1.0 - p_lvl) * right
    d_u = d_branch * cdf.density_from_value(fwd.branch)
    d_a = X.T @ d_u / p
    d_mu = -d_u.sum(axis=0)
    return d_a, d_mu


def objective_gradient(data: Dataset, params: SplitParameters, C, W, topology: TreeTopology,
                       cdf: LogisticCdf) -> GradientBundle:
    """Gradient of the mean expected misclassification cost."""
    W = check_costs(W, data.n_classes)
    C = np.asarray(C, dtype=float)
    fwd = forward(data.X, params, topology, cdf)
    G = (W[data.y] @ C) / data.n_samples
    d_a, d_mu = split_gradient(data.X, fwd, G, topology, cdf)
    d_c = assignment_costs_from_leaves(fwd.leaves, data.y, W)
    return GradientBundle(d_a, d_mu, d_c)


def performance_value(data: Dataset, params: SplitParameters, C, topology: TreeTopology,
                      cdf: LogisticCdf, class_k: int) -> float:
    """Expected number of correctly classified members of class ``class_k``."""
    members = _members(data, class_k)
    leaves = forward(data.X[members], params, topology, cdf).leaves
    return float(leaves.sum(axis=0) @ np.asarray(C, dtype=float)[class_k])


def performance_gradient(data: Dataset, params: SplitParameters, C, topology: TreeTopology,
                         cdf: LogisticCdf, class_k: int) -> GradientBundle:
    """Gradient of ``g_k = sum_{i in I_k} sum_t P[i, t] C[k, t]``."""
    C = np.asarray(C, dtype=float)
    members = _members(data, class_k)
    Xk = data.X[members]
    fwd = forward(Xk, params, topology, cdf)
    G = np.broadcast_to(C[class_k], fwd.leaves.shape)
    d_a, d_mu = split_gradient(Xk, fwd, G, topology, cdf)
    d_c = np.zeros_like(C)
    d_c[class_k] = fwd.leaves.sum(axis=0)
    return GradientBundle(d_a, d_mu, d_c)


def _members(data: Dataset, class_k: int) -> np.ndarray:
    if not 0 <= class_k < data.n_classes:
        raise ValueError(f"class {class_k} outside 0..{data.n_classes - 1}")
    members = np.flatnonzero(data.y == class_k)
    if members.size == 0:
        raise ValueError(f"class {class_k} has no members")
    return members
