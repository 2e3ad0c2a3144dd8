"""Multi-start training of trees with probabilistic oblique routing.

Each start alternates an exact leaf relabeling (see :mod:`orct.assignment`)
with one projected-gradient step on the split parameters, accepted by
Armijo backtracking.  Performance targets on individual classes are handled
with an augmented Lagrangian around the same inner scheme.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import InfeasibleTopologyError, solve_labels, labels_to_assignment
from .gradients import split_gradient
from .model import (
    Dataset,
    LogisticCdf,
    SplitParameters,
    TrainedModel,
    check_costs,
    class_leaf_sums,
    expected_cost,
    forward_arrays,
    linear_cost,
    uniform_costs,
)
from .topology import TreeTopology, build_topology

logger = logging.getLogger(__name__)

MIN_STEP = 1e-16


class NumericalFailure(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class ArmijoSettings:
    c1: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0


@dataclass(frozen=True)
class AugLagSettings:
    penalty_init: float = 1.0
    penalty_growth: float = 10.0
    multiplier_max: float = 1e6
    outer_rounds: int = 8
    feasibility_tol: float = 1e-4


@dataclass
class TrainConfig:
    """Training settings.

    ``rho_targets`` maps class positions (0-based) to a lower bound on the
    expected correct classification rate of that class.  ``gamma_schedule``
    optionally trains through increasing scales before the final ``gamma``.
    ``recentre_initial`` passes every random start through :func:`recentre`.
    """

    depth: int = 2
    gamma: float = 512.0
    costs: np.ndarray | None = None
    n_starts: int = 20
    max_outer_iters: int = 500
    tol_rel_objective: float = 1e-6
    patience: int = 5
    armijo: ArmijoSettings = field(default_factory=ArmijoSettings)
    rho_targets: dict[int, float] | None = None
    aug_lagrangian: AugLagSettings = field(default_factory=AugLagSettings)
    seed: int = 0
    enforce_coverage: bool = True
    gamma_schedule: tuple[float, ...] | None = (32.0, 128.0)
    recentre_initial: bool = True
    record_trace: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        for k, rho in (self.rho_targets or {}).items():
            if not 0.0 <= rho <= 1.0:
                raise ValueError(f"target for class {k} must lie in [0, 1], got {rho}")

    def cost_matrix(self, n_classes: int) -> np.ndarray:
        if self.costs is None:
            return uniform_costs(n_classes)
        return check_costs(self.costs, n_classes)


def initialize(rng: np.random.Generator, topology: TreeTopology, n_features: int) -> SplitParameters:
    """Random split parameters, i.i.d. uniform on [-1, 1]."""
    a = rng.uniform(-1.0, 1.0, size=(n_features, topology.n_branch))
    mu = rng.uniform(-1.0, 1.0, size=topology.n_branch)
    return SplitParameters(a, mu)


def recentre(params: SplitParameters, X: np.ndarray, topology: TreeTopology,
             only_degenerate: bool = True) -> SplitParameters:
    """Move thresholds of branches that do not split their population.

    Points are routed top-down by the sign of the split argument.  A branch
    whose reaching points all go the same way gets ``mu_t`` set to the median
    of their projections ``a_t . x / p``, so it starts out dividing them.
    Directions ``a`` are left untouched.
    """
    a, mu = params.a, params.mu.copy()
    proj = X @ a / X.shape[1]
    node = np.ones(X.shape[0], dtype=np.intp)
    for d in range(topology.depth):
        for t in range(2 ** d, 2 ** (d + 1)):
            here = node == t
            if np.count_nonzero(here) < 2:
                continue
            v = proj[here, t - 1]
            left = v >= mu[t - 1]
            if not only_degenerate or left.all() or not left.any():
                med = float(np.median(v))
                if v.min() < med:
                    mu[t - 1] = min(1.0, max(-1.0, med))
        go_left = proj[np.arange(X.shape[0]), node - 1] >= mu[node - 1]
        node = np.where(go_left, 2 * node, 2 * node + 1)
    return SplitParameters(a, mu)


class _Problem:
    """Training sample plus the current penalty state of one start."""

    def __init__(self, data: Dataset, W: np.ndarray, topology: TreeTopology, cdf: LogisticCdf,
                 coverage: bool, targets: dict[int, float] | None = None):
        self.data = data
        self.X = data.X
        self.inv_p = 1.0 / data.n_features
        self.y = data.y
        self.n = data.n_samples
        self.K = data.n_classes
        self.W = W
        self.Wy = W[data.y]
        self.topology = topology
        self.cdf = cdf
        self.coverage = coverage
        self.onehot = np.zeros((self.n, self.K))
        self.onehot[np.arange(self.n), self.y] = 1.0
        self.counts = self.onehot.sum(axis=0)
        targets = targets or {}
        self.rho = np.zeros(self.K)
        self.constrained = np.zeros(self.K, dtype=bool)
        for k, r in targets.items():
            self.rho[k] = r
            self.constrained[k] = True
        self.lam = np.zeros(self.K)
        self.sigma = 1.0

    def with_cdf(self, cdf: LogisticCdf, constrained: bool = True) -> "_Problem":
        other = object.__new__(_Problem)
        other.__dict__.update(self.__dict__)
        other.cdf = cdf
        if not constrained:
            other.constrained = np.zeros(self.K, dtype=bool)
        return other

    # per-class leaf mass and expected correct rates
    def evaluate(self, a, mu, C):
        fwd = forward_arrays(self.X @ a * self.inv_p - mu, self.topology, self.cdf)
        S = self.onehot.T @ fwd.leaves
        q = self.W.T @ S / self.n
        cost = linear_cost(q, C)
        rates = (S * C).sum(axis=1) / self.counts
        return fwd, S, q, cost, rates

    def penalty(self, rates) -> float:
        if not self.constrained.any():
            return 0.0
        c = self.rho - rates
        lam, sig = self.lam, self.sigma
        act = lam + sig * c >= 0
        terms = np.where(act, lam * c + 0.5 * sig * c * c, -0.5 * lam * lam / sig)
        return math.fsum(terms[self.constrained].tolist())

    def violations(self, rates) -> np.ndarray:
        return np.where(self.constrained, np.maximum(0.0, self.rho - rates), 0.0)

    def penalty_slopes(self, rates) -> np.ndarray:
        """``-dpenalty/d rate_k``, zero for unconstrained classes."""
        m = np.maximum(0.0, self.lam + self.sigma * (self.rho - rates))
        return np.where(self.constrained, m, 0.0)

    def value(self, a, mu, C):
        fwd, S, q, cost, rates = self.evaluate(a, mu, C)
        return cost + self.penalty(rates), (fwd, S, q, cost, rates)

    def gradient(self, a, mu, C, cache):
        fwd, S, q, cost, rates = cache
        G = self.Wy @ C / self.n
        if self.constrained.any():
            m = self.penalty_slopes(rates) / self.counts
            G = G - (m[:, None] * C)[self.y]
        return split_gradient(self.X, fwd, G, self.topology, self.cdf)

    def relabel(self, cache) -> np.ndarray:
        fwd, S, q, cost, rates = cache
        if self.constrained.any():
            m = self.penalty_slopes(rates) / self.counts
            q = q - m[:, None] * S
        return labels_to_assignment(solve_labels(q, self.coverage), self.K)


def _params(a, mu) -> SplitParameters:
    p = object.__new__(SplitParameters)
    p.a, p.mu = a, mu
    return p


@dataclass
class StartResult:
    start: int
    params: SplitParameters
    assignment: np.ndarray
    objective: float
    penalized: float
    max_violation: float
    iterations: int
    status: str
    trace: list = field(default_factory=list)


def _box(v):
    np.maximum(v, -1.0, out=v)
    return np.minimum(v, 1.0, out=v)


def _descend(problem: _Problem, a, mu, C, config: TrainConfig, start: int, trace: list,
             iter_offset: int = 0):
    """Alternating relabel / projected-gradient loop at fixed penalty state."""
    arm = config.armijo
    F, cache = problem.value(a, mu, C)
    C_new = problem.relabel(cache)
    if not np.array_equal(C_new, C):
        F_new, cache_new = problem.value(a, mu, C_new)
        if F_new <= F:
            C, F, cache = C_new, F_new, cache_new
    _check_finite(F, start, 0)
    if config.record_trace:
        trace.append((start, iter_offset, F, 0.0, float(problem.violations(cache[4]).max())))
    small = 0
    last_step = None
    status = "max_iter"
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        g_a, g_mu = problem.gradient(a, mu, C, cache)
        gnorm = max(np.max(np.abs(g_a)), np.max(np.abs(g_mu)))
        if gnorm == 0.0:
            status = "stationary"
            it -= 1
            break
        step = arm.initial_step / (1.0 + gnorm)
        if last_step is not None:
            step = min(step, 4.0 * last_step)
        accepted = False
        while step >= MIN_STEP:
            a_try = _box(a - step * g_a)
            mu_try = _box(mu - step * g_mu)
            slope = float(np.vdot(g_a, a_try - a) + np.vdot(g_mu, mu_try - mu))
            if slope == 0.0:
                break
            F_try, cache_try = problem.value(a_try, mu_try, C)
            if F_try <= F + arm.c1 * slope:
                accepted = True
                break
            step *= arm.shrink
        last_step = step
        if not accepted:
            status = "stalled" if step >= MIN_STEP else "step_underflow"
            it -= 1
            break
        C_try = problem.relabel(cache_try)
        if not np.array_equal(C_try, C):
            F_re, cache_re = problem.value(a_try, mu_try, C_try)
            if F_re <= F_try:
                C, F_try, cache_try = C_try, F_re, cache_re
        _check_finite(F_try, start, it)
        rel = (F - F_try) / max(abs(F), 1e-300)
        a, mu, F, cache = a_try, mu_try, F_try, cache_try
        if config.record_trace:
            trace.append((start, iter_offset + it, F, step,
                          float(problem.violations(cache[4]).max())))
        if F == 0.0:
            status = "zero_objective"
            break
        small = small + 1 if rel < config.tol_rel_objective else 0
        if small >= config.patience:
            status = "converged"
            break
    return a, mu, C, F, cache, it, status


def _check_finite(value, start, it):
    if not math.isfinite(value):
        raise NumericalFailure(f"non-finite objective in start {start} at iteration {it}",
                               {"start": start, "iteration": it, "objective": value})


@dataclass
class WarmStart:
    """Point reached by the unconstrained continuation stages of one start."""

    start: int
    params: SplitParameters
    assignment: np.ndarray


def warm_up(data: Dataset, config: TrainConfig, start: int = 0,
            topology: TreeTopology | None = None,
            initial: SplitParameters | None = None) -> WarmStart:
    """Random initial point of ``start`` carried through the scales below ``gamma``.

    The result depends neither on ``rho_targets`` nor on the final scale, so
    one warm start can seed several constrained runs.
    """
    topology = topology or build_topology(config.depth)
    _check_coverage(data, topology, config)
    if initial is None:
        initial = initialize(np.random.default_rng(config.seed + start), topology,
                             data.n_features)
        if config.recentre_initial:
            initial = recentre(initial, data.X, topology)
    problem = _Problem(data, config.cost_matrix(data.n_classes), topology,
                       LogisticCdf(config.gamma), config.enforce_coverage)
    a, mu = initial.a.copy(), initial.mu.copy()
    q0 = problem.evaluate(a, mu, np.zeros((data.n_classes, topology.n_leaves)))[2]
    C = labels_to_assignment(solve_labels(q0, config.enforce_coverage), data.n_classes)
    for g in _gamma_path(config)[:-1]:
        stage = problem.with_cdf(LogisticCdf(g), constrained=False)
        a, mu, C, *_ = _descend(stage, a, mu, C, config, start, [], 0)
    return WarmStart(start, _params(a, mu), C)


def single_start(data: Dataset, config: TrainConfig, start: int = 0,
                 topology: TreeTopology | None = None,
                 initial: SplitParameters | None = None,
                 warm: WarmStart | None = None) -> StartResult:
    """One local solve from a random (or given) initial point."""
    topology = topology or build_topology(config.depth)
    if warm is None:
        warm = warm_up(data, config, start, topology, initial)
    problem = _Problem(data, config.cost_matrix(data.n_classes), topology,
                       LogisticCdf(config.gamma), config.enforce_coverage, config.rho_targets)
    a, mu, C = warm.params.a, warm.params.mu, warm.assignment
    if problem.constrained.any():
        return _augmented_lagrangian(problem, a, mu, C, config, start)
    trace: list = []
    a, mu, C, F, cache, iters, status = _descend(problem, a, mu, C, config, start, trace)
    return StartResult(start, _params(a, mu), C, cache[3], F, 0.0, iters, status, trace)


def _check_coverage(data: Dataset, topology: TreeTopology, config: TrainConfig):
    if config.enforce_coverage and data.n_classes > topology.n_leaves:
        raise InfeasibleTopologyError(
            f"{data.n_classes} classes cannot be covered by {topology.n_leaves} leaves"
            f" (depth >= {math.ceil(math.log2(data.n_classes))} needed)")


def _gamma_path(config: TrainConfig) -> list[float]:
    sched = [g for g in (config.gamma_schedule or ()) if g < config.gamma]
    return sorted(sched) + [config.gamma]


def _augmented_lagrangian(problem: _Problem, a, mu, C, config: TrainConfig,
                          start: int) -> StartResult:
    al = config.aug_lagrangian
    problem.lam = np.zeros(problem.K)
    problem.sigma = al.penalty_init
    trace: list = []
    iters = 0
    prev_viol = math.inf
    status = "max_rounds"
    for rnd in range(al.outer_rounds):
        a, mu, C, F, cache, it, inner_status = _descend(problem, a, mu, C, config, start,
                                                        trace, iters)
        iters += it
        rates = cache[4]
        viol = float(problem.violations(rates).max())
        logger.debug("start %d round %d: cost %.6g violation %.3g sigma %.3g", start, rnd,
                     cache[3], viol, problem.sigma)
        if viol <= al.feasibility_tol:
            status = "feasible"
            break
        c = problem.rho - rates
        problem.lam = np.where(problem.constrained,
                               np.clip(problem.lam + problem.sigma * c, 0.0, al.multiplier_max),
                               0.0)
        if viol > 0.25 * prev_viol:
            problem.sigma *= al.penalty_growth
        prev_viol = viol
    _, cache = problem.value(a, mu, C)
    viol = float(problem.violations(cache[4]).max())
    return StartResult(start, _params(a, mu), C, cache[3], cache[3] + problem.penalty(cache[4]),
                       viol, iters, status, trace)


def _select(results: list[StartResult], constrained: bool, tol: float) -> StartResult:
    if not constrained:
        return min(results, key=lambda r: (r.objective, r.start))
    feasible = [r for r in results if r.max_violation <= tol]
    if feasible:
        return min(feasible, key=lambda r: (r.objective, r.start))
    return min(results, key=lambda r: (r.max_violation, r.objective, r.start))


def train(data: Dataset, config: TrainConfig, class_labels=None, scaling=None,
          warm_starts: list[WarmStart] | None = None) -> TrainedModel:
    """Train over ``config.n_starts`` starts and keep the best one.

    Start ``s`` draws its initial point from a generator seeded with
    ``config.seed + s``.  ``warm_starts`` (from :func:`warm_up` with the same
    data and config apart from targets) skips the continuation stages.
    """
    if not data.is_classification:
        raise ValueError("train expects a classification dataset")
    topology = build_topology(config.depth)
    _check_coverage(data, topology, config)
    if warm_starts is not None and len(warm_starts) != config.n_starts:
        raise ValueError(f"expected {config.n_starts} warm starts, got {len(warm_starts)}")
    targets = config.rho_targets or {}
    for k in targets:
        if not 0 <= k < data.n_classes:
            raise ValueError(f"performance target for unknown class {k}")
    results = []
    for s in range(config.n_starts):
        warm = warm_starts[s] if warm_starts is not None else None
        res = single_start(data, config, start=s, topology=topology, warm=warm)
        logger.debug("start %d: objective %.6g after %d iterations (%s)", s, res.objective,
                     res.iterations, res.status)
        results.append(res)
    tol = config.aug_lagrangian.feasibility_tol
    best = _select(results, bool(targets), tol)
    cdf = LogisticCdf(config.gamma)
    W = config.cost_matrix(data.n_classes)
    objective = expected_cost(data, best.params, best.assignment, W, topology, cdf)
    model = TrainedModel(
        topology=topology,
        params=best.params.copy(),
        assignment=best.assignment.copy(),
        cdf=cdf,
        class_labels=list(class_labels) if class_labels is not None
        else list(range(1, data.n_classes + 1)),
        scaling=scaling,
        objective_value=objective,
        diagnostics=[
            {"start": r.start, "iterations": r.iterations, "objective": r.objective,
             "penalized": r.penalized, "max_violation": r.max_violation, "status": r.status,
             "trace": r.trace}
            for r in results
        ],
    )
    if targets:
        rates = training_rates(model, data)
        model.training_rates = {k: rates[k] for k in targets}
        model.violations = {k: max(0.0, targets[k] - rates[k]) for k in targets}
        model.constraints_unmet = best.max_violation > tol
        if model.constraints_unmet:
            logger.warning("performance targets not met: %s", model.violations)
    return model


def train_constrained(data: Dataset, config: TrainConfig, class_labels=None,
                      scaling=None) -> TrainedModel:
    """Train with lower bounds on expected per-class correct classification rates."""
    if not config.rho_targets:
        raise ValueError("train_constrained needs non-empty rho_targets")
    return train(data, config, class_labels, scaling)


def training_rates(model: TrainedModel, data: Dataset) -> np.ndarray:
    """Expected correct classification rate of each class on ``data``."""
    S = class_leaf_sums(model.leaf_probabilities(data.X), data.y, data.n_classes)
    return (S * model.assignment).sum(axis=1) / np.maximum(data.class_counts(), 1)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
