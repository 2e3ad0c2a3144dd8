"""Randomized tree evaluation: routing, leaf and class probabilities, costs.

Array conventions (0-based positions; node ids stay 1-based):

* ``X``: (N, p) features in [0, 1]
* ``a``: (p, n_branch) oblique coefficients, ``mu``: (n_branch,) intercepts
* ``C``: (K, n_leaves) leaf-to-class assignment
* ``W``: (K, K) misclassification costs, ``W[y, k]`` for predicting ``k`` on ``y``
* labels ``y`` are integer class positions ``0 .. K-1``
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .topology import TreeTopology, build_topology

EPS = 1e-15


class LogisticCdf:
    """Logistic CDF with scale ``gamma``: ``F(u) = 1 / (1 + exp(-gamma * u))``.

    Outputs are clamped to ``[EPS, 1 - EPS]`` so that products and their
    derivatives stay finite.
    """

    name = "logistic"

    def __init__(self, gamma: float = 512.0):
        gamma = float(gamma)
        if not (gamma > 0 and math.isfinite(gamma)):
            raise ValueError(f"gamma must be positive and finite, got {gamma}")
        self.gamma = gamma

    def __call__(self, u):
        v = expit(self.gamma * np.asarray(u, dtype=float))
        if not isinstance(v, np.ndarray):
            return np.clip(v, EPS, 1.0 - EPS)
        np.maximum(v, EPS, out=v)
        return np.minimum(v, 1.0 - EPS, out=v)

    def density_from_value(self, f):
        """Derivative ``dF/du`` expressed through ``F(u)``."""
        return self.gamma * f * (1.0 - f)

    def __repr__(self):
        return f"LogisticCdf(gamma={self.gamma!r})"

    def __eq__(self, other):
        return isinstance(other, LogisticCdf) and other.gamma == self.gamma

    def __hash__(self):
        return hash((self.name, self.gamma))


@dataclass
class SplitParameters:
    a: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.a = np.array(self.a, dtype=float, ndmin=2)
        self.mu = np.array(self.mu, dtype=float, ndmin=1)
        if self.a.shape[1] != self.mu.shape[0]:
            raise ValueError(
                f"a has {self.a.shape[1]} branch columns but mu has {self.mu.shape[0]} entries"
            )
        if np.any(np.abs(self.a) > 1.0) or np.any(np.abs(self.mu) > 1.0):
            raise ValueError("split parameters must lie in [-1, 1]")

    @property
    def n_features(self) -> int:
        return self.a.shape[0]

    @property
    def n_branch(self) -> int:
        return self.a.shape[1]

    @classmethod
    def zeros(cls, n_features: int, topology: TreeTopology) -> "SplitParameters":
        return cls(np.zeros((n_features, topology.n_branch)), np.zeros(topology.n_branch))

    def copy(self) -> "SplitParameters":
        return SplitParameters(self.a.copy(), self.mu.copy())


@dataclass
class Dataset:
    """Scaled design matrix with integer labels (or real targets for regression)."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.X = np.array(self.X, dtype=float, ndmin=2)
        if self.X.shape[0] == 0:
            raise ValueError("dataset is empty")
        if np.any(self.X < 0.0) or np.any(self.X > 1.0) or not np.all(np.isfinite(self.X)):
            raise ValueError("features must lie in [0, 1]")
        y = np.asarray(self.y)
        if y.shape != (self.X.shape[0],):
            raise ValueError(f"labels have shape {y.shape}, expected ({self.X.shape[0]},)")
        if self.n_classes is None:
            self.y = y.astype(float)
        else:
            if not np.issubdtype(y.dtype, np.integer):
                if np.any(y != np.round(y)):
                    raise ValueError("class labels must be integers")
            self.y = y.astype(np.intp)
            if self.y.min() < 0 or self.y.max() >= self.n_classes:
                raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.n_classes is not None

    def class_index_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.y == k) for k in range(self.n_classes)]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.n_classes, self.feature_names)


def uniform_costs(n_classes: int, weight: float = 0.5) -> np.ndarray:
    """Cost matrix with ``weight`` off the diagonal and zeros on it."""
    W = np.full((n_classes, n_classes), float(weight))
    np.fill_diagonal(W, 0.0)
    return W


def check_costs(W, n_classes: int) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != (n_classes, n_classes):
        raise ValueError(f"cost matrix must be {n_classes}x{n_classes}, got {W.shape}")
    if np.any(W < 0) or not np.all(np.isfinite(W)):
        raise ValueError("costs must be finite and nonnegative")
    if np.any(np.diag(W) != 0):
        raise ValueError("cost matrix must have a zero diagonal")
    return W


def check_assignment(C, n_classes: int, topology: TreeTopology, coverage: bool = True,
                     atol: float = 1e-9) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.shape != (n_classes, topology.n_leaves):
        raise ValueError(f"assignment must be {n_classes}x{topology.n_leaves}, got {C.shape}")
    if np.any(C < -atol):
        raise ValueError("assignment entries must be nonnegative")
    if not np.allclose(C.sum(axis=0), 1.0, atol=atol):
        raise ValueError("each leaf column of the assignment must sum to 1")
    if coverage and np.any(C.sum(axis=1) < 1.0 - atol):
        raise ValueError("each class must be assigned at least one leaf")
    return C


# ---------------------------------------------------------------------------
# routing


def split_arguments(X, params: SplitParameters) -> np.ndarray:
    """``u[i, t] = (1/p) * sum_j a[j, t] * X[i, j] - mu[t]``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.n_features:
        raise ValueError(f"X has {X.shape[1]} features, parameters expect {params.n_features}")
    return X @ params.a / params.n_features - params.mu


def branch_probability(x, a_col, mu_t: float, cdf: LogisticCdf) -> float:
    """Probability of taking the left branch at a single node."""
    x = np.asarray(x, dtype=float).ravel()
    a_col = np.asarray(a_col, dtype=float).ravel()
    if x.shape != a_col.shape:
        raise ValueError(f"x has {x.size} entries but a_col has {a_col.size}")
    return float(cdf(np.dot(a_col, x) / x.size - mu_t))


class Forward(NamedTuple):
    branch: np.ndarray    # (N, n_branch) left-branch probabilities
    reach: list           # per level d: (N, 2**d) probability of reaching each node
    leaves: np.ndarray    # (N, n_leaves)


def forward(X, params: SplitParameters, topology: TreeTopology, cdf: LogisticCdf) -> Forward:
    """Single downward pass computing branch, node-reach and leaf probabilities."""
    if params.n_branch != topology.n_branch:
        raise ValueError(
            f"parameters have {params.n_branch} branch nodes, topology has {topology.n_branch}"
        )
    return forward_arrays(split_arguments(X, params), topology, cdf)


def forward_arrays(u: np.ndarray, topology: TreeTopology, cdf: LogisticCdf) -> Forward:
    """:func:`forward` from precomputed split arguments, without validation."""
    pb = cdf(u)
    n = pb.shape[0]
    reach = [np.ones((n, 1))]
    for d in range(topology.depth):
        lo = 2 ** d - 1
        p_lvl = pb[:, lo:lo + 2 ** d]
        cur = reach[-1]
        nxt = np.empty((n, 2 ** (d + 1)))
        nxt[:, 0::2] = cur * p_lvl
        nxt[:, 1::2] = cur * (1.0 - p_lvl)
        reach.append(nxt)
    return Forward(pb, reach[:-1], reach[-1])


def leaf_probabilities(x, params: SplitParameters, topology: TreeTopology,
                       cdf: LogisticCdf) -> np.ndarray:
    """Leaf membership probabilities; a 1-D ``x`` yields a 1-D result."""
    x = np.asarray(x, dtype=float)
    out = forward(np.atleast_2d(x), params, topology, cdf).leaves
    return out[0] if x.ndim == 1 else out


def class_membership(x, params: SplitParameters, C, topology: TreeTopology,
                     cdf: LogisticCdf) -> np.ndarray:
    """Class membership probabilities ``sum_t P_t(x) C[k, t]``."""
    return leaf_probabilities(x, params, topology, cdf) @ np.asarray(C, dtype=float).T


def assignment_costs_from_leaves(leaves: np.ndarray, y: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``q[k, t] = (1/N) sum_i P[i, t] W[y_i, k]``."""
    return W.T @ class_leaf_sums(leaves, y, W.shape[0]) / leaves.shape[0]


def class_leaf_sums(leaves: np.ndarray, y: np.ndarray, n_classes: int) -> np.ndarray:
    """``S[k, t] = sum_{i in I_k} P[i, t]``."""
    onehot = np.zeros((leaves.shape[0], n_classes))
    onehot[np.arange(leaves.shape[0]), y] = 1.0
    return onehot.T @ leaves


def linear_cost(q: np.ndarray, C: np.ndarray) -> float:
    """``sum q * C`` summed leaf by leaf with exact rounding.

    Per-leaf sums are formed first so that for 0/1 assignments each term is
    exactly the selected ``q`` entry; the final sum is order independent.
    """
    return math.fsum((q * C).sum(axis=0).tolist())


def expected_cost(data: Dataset, params: SplitParameters, C, W, topology: TreeTopology,
                  cdf: LogisticCdf) -> float:
    """Mean expected misclassification cost over the sample."""
    if data.n_samples == 0:
        raise ValueError("dataset is empty")
    W = check_costs(W, data.n_classes)
    leaves = forward(data.X, params, topology, cdf).leaves
    return linear_cost(assignment_costs_from_leaves(leaves, data.y, W), np.asarray(C, float))


def decide(proba: np.ndarray) -> np.ndarray:
    """Argmax class positions; ties go to the lowest index."""
    return np.argmax(proba, axis=-1)


# ---------------------------------------------------------------------------
# trained models and their JSON form


@dataclass
class ScalingSpec:
    """Encoding and min-max scaling learned on a training table.

    ``columns`` lists the source columns in order as ``(name, levels)``;
    ``levels`` is ``None`` for numeric columns and the sorted category list
    for categorical ones.  ``minimum``/``maximum`` are per encoded feature.
    """

    columns: list[tuple[str, list[str] | None]]
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        self.minimum = np.asarray(self.minimum, dtype=float)
        self.maximum = np.asarray(self.maximum, dtype=float)
        if np.any(self.minimum > self.maximum):
            raise ValueError("scaling minimum exceeds maximum")

    @property
    def feature_names(self) -> list[str]:
        names = []
        for name, levels in self.columns:
            if levels is None:
                names.append(name)
            else:
                names.extend(f"{name}={lv}" for lv in levels)
        return names

    @property
    def source_of_feature(self) -> list[str]:
        out = []
        for name, levels in self.columns:
            out.extend([name] * (1 if levels is None else len(levels)))
        return out

    def to_dict(self) -> dict:
        return {
            "min": self.minimum.tolist(),
            "max": self.maximum.tolist(),
            "columns": [{"name": n, "levels": lv} for n, lv in self.columns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingSpec":
        cols = [(c["name"], c["levels"]) for c in d.get("columns", [])]
        if not cols:
            cols = [(f"x{j + 1}", None) for j in range(len(d["min"]))]
        return cls(cols, d["min"], d["max"])


def _maybe_float(v):
    return None if v is None or math.isnan(v) else float(v)


def _flat(arr: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(arr, dtype=float).ravel(order="C")]


@dataclass
class TrainedModel:
    """Trained classifier with probabilistic oblique routing."""

    topology: TreeTopology
    params: SplitParameters
    assignment: np.ndarray
    cdf: LogisticCdf
    class_labels: list = field(default_factory=list)
    scaling: ScalingSpec | None = None
    objective_value: float = math.nan
    diagnostics: list = field(default_factory=list)
    constraints_unmet: bool = False
    violations: dict = field(default_factory=dict)
    training_rates: dict = field(default_factory=dict)

    task = "classification"

    @property
    def n_classes(self) -> int:
        return self.assignment.shape[0]

    def leaf_probabilities(self, X) -> np.ndarray:
        return forward(np.atleast_2d(X), self.params, self.topology, self.cdf).leaves

    def predict_proba(self, X) -> np.ndarray:
        return self.leaf_probabilities(X) @ self.assignment.T

    def predict(self, X) -> np.ndarray:
        """Predicted class positions (0-based)."""
        return decide(self.predict_proba(X))

    def predict_one(self, x) -> tuple[int, np.ndarray]:
        proba = self.predict_proba(np.atleast_2d(x))[0]
        return int(decide(proba)), proba

    def labels_of(self, positions) -> list:
        return [self.class_labels[int(k)] for k in np.atleast_1d(positions)]

    def to_dict(self) -> dict:
        p = self.params.n_features
        scaling = self.scaling or ScalingSpec(
            [(f"x{j + 1}", None) for j in range(p)], np.zeros(p), np.ones(p))
        return {
            "task": self.task,
            "depth": self.topology.depth,
            "gamma": self.cdf.gamma,
            "p": p,
            "K": self.n_classes,
            "a": _flat(self.params.a),
            "mu": _flat(self.params.mu),
            "C": _flat(self.assignment),
            "feature_scaling": scaling.to_dict(),
            "class_labels": list(self.class_labels),
            "objective_value": _maybe_float(self.objective_value),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


@dataclass
class RegressionModel:
    """Trained randomized regression tree with real leaf outputs ``phi``."""

    topology: TreeTopology
    params: SplitParameters
    phi: np.ndarray
    cdf: LogisticCdf
    scaling: ScalingSpec | None = None
    objective_value: float = math.nan
    diagnostics: list = field(default_factory=list)

    task = "regression"

    def leaf_probabilities(self, X) -> np.ndarray:
        return forward(np.atleast_2d(X), self.params, self.topology, self.cdf).leaves

    def predict(self, X) -> np.ndarray:
        return self.leaf_probabilities(X) @ self.phi

    def to_dict(self) -> dict:
        p = self.params.n_features
        scaling = self.scaling or ScalingSpec(
            [(f"x{j + 1}", None) for j in range(p)], np.zeros(p), np.ones(p))
        return {
            "task": self.task,
            "depth": self.topology.depth,
            "gamma": self.cdf.gamma,
            "p": p,
            "a": _flat(self.params.a),
            "mu": _flat(self.params.mu),
            "phi": _flat(self.phi),
            "feature_scaling": scaling.to_dict(),
            "objective_value": _maybe_float(self.objective_value),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def model_from_dict(d: dict[str, Any]):
    topo = build_topology(int(d["depth"]))
    p = int(d["p"])
    params = SplitParameters(np.array(d["a"], float).reshape(p, topo.n_branch), d["mu"])
    cdf = LogisticCdf(d["gamma"])
    scaling = ScalingSpec.from_dict(d["feature_scaling"]) if "feature_scaling" in d else None
    objective = d.get("objective_value")
    objective = math.nan if objective is None else float(objective)
    if d.get("task", "classification") == "regression":
        return RegressionModel(topo, params, np.array(d["phi"], float), cdf, scaling, objective)
    K = int(d["K"])
    C = np.array(d["C"], float).reshape(K, topo.n_leaves)
    labels = d.get("class_labels") or list(range(1, K + 1))
    return TrainedModel(topo, params, C, cdf, labels, scaling, objective)


def model_from_json(text: str):
    return model_from_dict(json.loads(text))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())


def dataset_from_arrays(X: Sequence, y: Sequence, n_classes: int | None = None) -> Dataset:
    y = np.asarray(y)
    if n_classes is None and np.issubdtype(y.dtype, np.integer):
        n_classes = int(y.max()) + 1
    return Dataset(X, y, n_classes)
