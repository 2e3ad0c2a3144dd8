"""Randomized regression trees with real leaf outputs.

The prediction for ``x`` is ``sum_t P_t(x) phi_t`` and training minimizes
the mean squared error.  For fixed splits the error is a linear least
squares problem in ``phi``, solved exactly; the splits are then moved by
the same projected-gradient scheme as the classifier.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve

from .gradients import split_gradient
from .model import Dataset, LogisticCdf, RegressionModel, SplitParameters, forward
from .topology import TreeTopology, build_topology
from .trainer import TrainConfig, _descend, _gamma_path, _params, initialize, recentre

RIDGE = 1e-10


def _check_regression(data: Dataset):
    if data.is_classification:
        raise ValueError("regression expects real-valued labels")
    if data.n_samples == 0:
        raise ValueError("empty dataset")


def mse(P: np.ndarray, phi, y) -> float:
    r = P @ np.asarray(phi, dtype=float) - y
    return math.fsum((r * r).tolist()) / y.size


def orrt_objective(data: Dataset, params: SplitParameters, phi, topology: TreeTopology,
                   cdf: LogisticCdf) -> float:
    """Mean squared error of the soft predictions ``P @ phi``."""
    _check_regression(data)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (topology.n_leaves,):
        raise ValueError(f"phi must have length {topology.n_leaves}")
    if not np.all(np.isfinite(phi)):
        raise ValueError("phi must be finite")
    return mse(forward(data.X, params, topology, cdf).leaves, phi, data.y)


def leaf_values_from_memberships(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Ridge-stabilized least squares ``argmin ||P phi - y||^2``."""
    gram = P.T @ P
    gram[np.diag_indices_from(gram)] += RIDGE
    return solve(gram, P.T @ y, assume_a="pos")


def solve_leaf_values(data: Dataset, params: SplitParameters, topology: TreeTopology,
                      cdf: LogisticCdf) -> np.ndarray:
    """Optimal leaf outputs for fixed split parameters."""
    _check_regression(data)
    return leaf_values_from_memberships(forward(data.X, params, topology, cdf).leaves, data.y)


class _RegressionProblem:
    """Adapter giving the classifier's descent loop a squared-error objective."""

    constrained = np.zeros(1, dtype=bool)

    def __init__(self, data: Dataset, topology: TreeTopology, cdf: LogisticCdf):
        self.X = data.X
        self.y = data.y
        self.n = data.n_samples
        self.topology = topology
        self.cdf = cdf

    def with_cdf(self, cdf: LogisticCdf) -> "_RegressionProblem":
        other = object.__new__(_RegressionProblem)
        other.__dict__.update(self.__dict__)
        other.cdf = cdf
        return other

    def value(self, a, mu, phi):
        fwd = forward(self.X, _params(a, mu), self.topology, self.cdf)
        F = mse(fwd.leaves, phi, self.y)
        return F, (fwd, None, None, F, None)

    def gradient(self, a, mu, phi, cache):
        fwd = cache[0]
        r = fwd.leaves @ phi - self.y
        G = (2.0 / self.n) * r[:, None] * phi[None, :]
        return split_gradient(self.X, fwd, G, self.topology, self.cdf)

    def relabel(self, cache) -> np.ndarray:
        return leaf_values_from_memberships(cache[0].leaves, self.y)

    def violations(self, rates) -> np.ndarray:
        return np.zeros(1)


def train_orrt(data: Dataset, config: TrainConfig, scaling=None) -> RegressionModel:
    """Multi-start training of a regression tree; keeps the lowest training MSE.

    Uses the classifier settings for depth, scale schedule, starts, line search
    and stopping.  Costs, coverage and performance targets do not apply.
    """
    _check_regression(data)
    if config.rho_targets:
        raise ValueError("performance targets are not defined for regression")
    topology = build_topology(config.depth)
    problem = _RegressionProblem(data, topology, LogisticCdf(config.gamma))
    results = []
    for s in range(config.n_starts):
        rng = np.random.default_rng(config.seed + s)
        init = initialize(rng, topology, data.n_features)
        if config.recentre_initial:
            init = recentre(init, data.X, topology)
        a, mu = init.a, init.mu
        phi = problem.relabel(problem.value(a, mu, np.zeros(topology.n_leaves))[1])
        for g in _gamma_path(config)[:-1]:
            stage = problem.with_cdf(LogisticCdf(g))
            a, mu, phi, *_ = _descend(stage, a, mu, phi, config, s, [], 0)
        trace: list = []
        a, mu, phi, F, _, iters, status = _descend(problem, a, mu, phi, config, s, trace)
        results.append((F, s, a, mu, phi, iters, status, trace))
    F, s, a, mu, phi, *_ = min(results, key=lambda r: (r[0], r[1]))
    return RegressionModel(
        topology=topology,
        params=SplitParameters(a.copy(), mu.copy()),
        phi=phi.copy(),
        cdf=LogisticCdf(config.gamma),
        scaling=scaling,
        objective_value=F,
        diagnostics=[{"start": r[1], "iterations": r[5], "objective": r[0], "status": r[6],
                      "trace": r[7]} for r in results],
    )
