import numpy as np
import pytest

from oracles import central_difference
from orct.gradients import objective_gradient, performance_gradient, performance_value
from orct.model import (
    Dataset,
    LogisticCdf,
    SplitParameters,
    expected_cost,
    forward,
    uniform_costs,
)
from orct.topology import build_topology


def random_instance(rng, n, p, depth, K=3):
    topo = build_topology(depth)
    X = rng.uniform(size=(n, p))
    y = np.concatenate([np.arange(K), rng.integers(0, K, n - K)])
    data = Dataset(X, y, K)
    a = rng.uniform(-1, 1, (p, topo.n_branch))
    mu = rng.uniform(-1, 1, topo.n_branch)
    C = np.zeros((K, topo.n_leaves))
    C[rng.integers(0, K, topo.n_leaves), np.arange(topo.n_leaves)] = 1.0
    return topo, data, a, mu, C


def rel_err(analytic, numeric, floor=1e-8):
    """Worst ratio of the error to its allowance ``max(1e-5 |numeric|, floor)``, times 1e-5."""
    allowance = np.maximum(1e-5 * np.abs(numeric), floor)
    return 1e-5 * np.max(np.abs(analytic - numeric) / allowance)


def check_objective(rng, n, p, depth, gamma, K=3):
    topo, data, a, mu, C = random_instance(rng, n, p, depth, K)
    W = uniform_costs(K)
    cdf = LogisticCdf(gamma)
    g = objective_gradient(data, SplitParameters(a, mu), C, W, topo, cdf)
    f = lambda a_, mu_: expected_cost(data, SplitParameters(a_, mu_), C, W, topo, cdf)
    na, nmu = central_difference(f, a, mu)
    return max(rel_err(g.d_a, na), rel_err(g.d_mu, nmu))


def check_performance(rng, n, p, depth, gamma, K=3):
    topo, data, a, mu, C = random_instance(rng, n, p, depth, K)
    cdf = LogisticCdf(gamma)
    k = int(rng.integers(0, K))
    g = performance_gradient(data, SplitParameters(a, mu), C, topo, cdf, k)
    f = lambda a_, mu_: performance_value(data, SplitParameters(a_, mu_), C, topo, cdf, k)
    na, nmu = central_difference(f, a, mu)
    return max(rel_err(g.d_a, na), rel_err(g.d_mu, nmu))


def test_objective_matches_finite_differences():
    assert check_objective(np.random.default_rng(0), 20, 3, 2, 4.0) < 1e-5


def test_performance_matches_finite_differences():
    assert check_performance(np.random.default_rng(1), 20, 3, 2, 4.0) < 1e-5


def test_root_stationary_under_label_swap_symmetry():
    topo = build_topology(1)
    X = np.array([[0.2], [0.8], [0.2], [0.8]])
    data = Dataset(X, [0, 0, 1, 1], 2)
    g = objective_gradient(data, SplitParameters.zeros(1, topo), np.eye(2), uniform_costs(2),
                           topo, LogisticCdf(3))
    assert g.d_mu[0] == 0.0


def test_assignment_gradient_is_linear_coefficient():
    rng = np.random.default_rng(2)
    topo, _, a, mu, C = random_instance(rng, 5, 2, 2)
    x = rng.uniform(size=(1, 2))
    data = Dataset(x, [1], 3)
    W = uniform_costs(3)
    cdf = LogisticCdf(6)
    params = SplitParameters(a, mu)
    g = objective_gradient(data, params, C, W, topo, cdf)
    P = forward(x, params, topo, cdf).leaves[0]
    expected = W[1][:, None] * P[None, :] / 1
    np.testing.assert_array_equal(g.d_c, expected)
    C2 = np.roll(C, 1, axis=0)
    np.testing.assert_array_equal(objective_gradient(data, params, C2, W, topo, cdf).d_c, g.d_c)


def test_performance_gradient_zero_row():
    rng = np.random.default_rng(3)
    topo, data, a, mu, C = random_instance(rng, 12, 2, 2)
    C[0] = 0.0
    C[1] += 1.0 - C.sum(axis=0)
    g = performance_gradient(data, SplitParameters(a, mu), C, topo, LogisticCdf(4), 0)
    assert np.all(g.d_a == 0) and np.all(g.d_mu == 0)
    assert np.all(g.d_c[1:] == 0) and np.any(g.d_c[0] != 0)


def test_performance_gradient_small_gamma():
    rng = np.random.default_rng(4)
    gamma = 1e-8
    topo, data, a, mu, C = random_instance(rng, 15, 3, 2)
    g = performance_gradient(data, SplitParameters(a, mu), C, topo, LogisticCdf(gamma), 1)
    members = data.X[data.y == 1]
    # at u ~ 0 every F is 1/2 and F' is gamma/4; the remaining factor is 1/2
    S = topo.routing_signs()
    expected = np.zeros_like(a)
    for t in range(topo.n_leaves):
        for b in range(topo.n_branch):
            if S[t, b]:
                expected[:, b] += (S[t, b] * gamma / 4 * members.sum(axis=0) / 3
                                   * 0.5 ** (topo.depth - 1) * C[1, t])
    np.testing.assert_allclose(g.d_a, expected, rtol=1e-6, atol=1e-6 * np.abs(expected).max())
    assert np.max(np.abs(g.d_a)) <= gamma * members.shape[0]


def test_performance_gradient_empty_class():
    topo = build_topology(1)
    data = Dataset([[0.1], [0.9]], [0, 0], 2)
    with pytest.raises(ValueError):
        performance_gradient(data, SplitParameters.zeros(1, topo), np.eye(2), topo,
                             LogisticCdf(1), 1)


def test_objective_gradient_bound():
    rng = np.random.default_rng(5)
    for _ in range(30):
        depth = int(rng.integers(1, 4))
        p = int(rng.integers(1, 6))
        gamma = float(rng.choice([1.0, 8.0, 64.0]))
        topo, data, a, mu, C = random_instance(rng, 25, p, depth)
        W = uniform_costs(3)
        g = objective_gradient(data, SplitParameters(a, mu), C, W, topo, LogisticCdf(gamma))
        assert np.max(np.abs(g.d_a)) <= gamma * W.max() / (4 * p) + 1e-15


@pytest.mark.parametrize("gamma", [1.0, 8.0, 64.0])
def test_random_instances(gamma):
    rng = np.random.default_rng(int(gamma))
    for _ in range(5):
        n, p, depth = int(rng.integers(3, 51)), int(rng.integers(1, 11)), int(rng.integers(1, 4))
        assert check_objective(rng, n, p, depth, gamma) < 1e-5
        assert check_performance(rng, n, p, depth, gamma) < 1e-5
