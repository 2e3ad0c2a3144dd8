import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hard_route, leaf_probs_literal
from orct.model import (
    Dataset,
    LogisticCdf,
    ScalingSpec,
    SplitParameters,
    TrainedModel,
    branch_probability,
    check_assignment,
    check_costs,
    class_membership,
    decide,
    expected_cost,
    leaf_probabilities,
    model_from_json,
    uniform_costs,
)
from orct.topology import build_topology


def logit(p):
    return math.log(p / (1 - p))


def params_with_branch_probs(probs, gamma, p=1):
    """a = 0 makes every branch probability F(-mu_t)."""
    mu = np.array([-logit(q) / gamma for q in probs])
    return SplitParameters(np.zeros((p, len(probs))), mu)


# ---------------------------------------------------------------- logistic

def test_cdf_properties():
    F = LogisticCdf(3.0)
    u = np.linspace(-2, 2, 41)
    assert F(0.0) == 0.5
    assert np.all(np.diff(F(u)) > 0)
    np.testing.assert_allclose(F(-u), 1 - F(u), atol=1e-15)


def test_cdf_extreme_arguments_stay_open():
    F = LogisticCdf(1e4)
    v = F(np.array([-1.0, 1.0]))
    assert 0 < v[0] < 1e-14 and 1 - 1e-14 < v[1] < 1
    assert np.all(np.isfinite(v))


def test_cdf_rejects_bad_gamma():
    for g in (0.0, -1.0, math.inf):
        with pytest.raises(ValueError):
            LogisticCdf(g)


@pytest.mark.parametrize("x, a, mu, gamma, expected", [
    ([0.5], [1.0], 0.0, 1.0, 0.622459),
    # gamma * u = 5.12 exactly up to rounding of 0.51 - 0.5
    ([0.51], [1.0], 0.5, 512.0, 1.0 / (1.0 + math.exp(-5.12))),
])
def test_branch_probability_examples(x, a, mu, gamma, expected):
    assert branch_probability(x, a, mu, LogisticCdf(gamma)) == pytest.approx(expected, abs=1e-6)


def test_branch_probability_zero_split():
    for g in (1.0, 512.0, 1e6):
        assert branch_probability([0.3, 0.9], [0, 0], 0.0, LogisticCdf(g)) == 0.5


def test_branch_probability_dimension_mismatch():
    with pytest.raises(ValueError):
        branch_probability([0.5, 0.5], [1.0], 0.0, LogisticCdf(1))


# ------------------------------------------------------------- parameters

def test_split_parameters_box():
    with pytest.raises(ValueError):
        SplitParameters([[1.5]], [0.0])
    with pytest.raises(ValueError):
        SplitParameters(np.zeros((2, 3)), np.zeros(2))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset([[1.2]], [0], 1)
    with pytest.raises(ValueError):
        Dataset([[0.5]], [2], 2)
    d = Dataset([[0.1], [0.2], [0.3]], [0, 1, 0], 2)
    assert [list(s) for s in d.class_index_sets()] == [[0, 2], [1]]


def test_cost_checks():
    W = uniform_costs(3)
    assert np.all(np.diag(W) == 0) and W[0, 1] == 0.5
    bad = W.copy()
    bad[1, 1] = 0.1
    with pytest.raises(ValueError):
        check_costs(bad, 3)


def test_assignment_checks():
    topo = build_topology(1)
    check_assignment(np.eye(2), 2, topo)
    with pytest.raises(ValueError):
        check_assignment([[1, 1], [0, 0]], 2, topo)
    check_assignment([[1, 1], [0, 0]], 2, topo, coverage=False)
    with pytest.raises(ValueError):
        check_assignment([[0.5, 1], [0, 0]], 2, topo, coverage=False)


# ------------------------------------------------------- leaf probabilities

def test_leaf_probabilities_zero_split():
    topo = build_topology(2)
    P = leaf_probabilities([0.3], SplitParameters.zeros(1, topo), topo, LogisticCdf(512))
    np.testing.assert_array_equal(P, [0.25] * 4)


def test_leaf_probabilities_depth_one():
    topo = build_topology(1)
    P = leaf_probabilities([0.5], SplitParameters([[1.0]], [0.0]), topo, LogisticCdf(1))
    np.testing.assert_allclose(P, [0.622459, 0.377541], atol=1e-6)


def test_leaf_probabilities_hand_product():
    topo = build_topology(2)
    params = params_with_branch_probs([0.9, 0.8, 0.3], 10.0)
    P = leaf_probabilities([0.5], params, topo, LogisticCdf(10.0))
    np.testing.assert_allclose(P, [0.72, 0.18, 0.03, 0.07], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.sampled_from([1.0, 8.0, 512.0]),
       st.integers(0, 2 ** 32 - 1))
def test_downward_pass_matches_literal_product(depth, p, gamma, seed):
    rng = np.random.default_rng(seed)
    topo = build_topology(depth)
    a = rng.uniform(-1, 1, (p, topo.n_branch))
    mu = rng.uniform(-1, 1, topo.n_branch)
    x = rng.uniform(0, 1, p)
    P = leaf_probabilities(x, SplitParameters(a, mu), topo, LogisticCdf(gamma))
    np.testing.assert_allclose(P, leaf_probs_literal(x, a, mu, gamma, depth), rtol=0,
                               atol=1e-14)


def test_batch_matches_rows():
    rng = np.random.default_rng(1)
    topo = build_topology(3)
    params = SplitParameters(rng.uniform(-1, 1, (4, 7)), rng.uniform(-1, 1, 7))
    X = rng.uniform(size=(9, 4))
    batch = leaf_probabilities(X, params, topo, LogisticCdf(8))
    for i in range(9):
        np.testing.assert_allclose(batch[i], leaf_probabilities(X[i], params, topo,
                                                                LogisticCdf(8)),
                                   rtol=0, atol=1e-15)


def test_swapping_subtrees_after_negation():
    """Negate (a, mu) at the root and swap its subtrees: leaf probabilities unchanged."""
    rng = np.random.default_rng(3)
    topo = build_topology(2)
    a = rng.uniform(-1, 1, (3, 3))
    mu = rng.uniform(-1, 1, 3)
    X = rng.uniform(size=(20, 3))
    cdf = LogisticCdf(5.0)
    P = leaf_probabilities(X, SplitParameters(a, mu), topo, cdf)
    a2, mu2 = a.copy(), mu.copy()
    a2[:, 0], mu2[0] = -a[:, 0], -mu[0]
    a2[:, [1, 2]], mu2[[1, 2]] = a2[:, [2, 1]], mu2[[2, 1]]
    P2 = leaf_probabilities(X, SplitParameters(a2, mu2), topo, cdf)
    np.testing.assert_allclose(P2[:, [2, 3, 0, 1]], P, atol=1e-15)


def test_continuity_bound():
    rng = np.random.default_rng(4)
    for _ in range(50):
        depth, p, K = rng.integers(1, 4), rng.integers(1, 6), 3
        topo = build_topology(int(depth))
        gamma = float(rng.choice([1.0, 8.0, 64.0]))
        params = SplitParameters(rng.uniform(-1, 1, (p, topo.n_branch)),
                                 rng.uniform(-1, 1, topo.n_branch))
        C = np.zeros((K, topo.n_leaves))
        C[rng.integers(0, K, topo.n_leaves), np.arange(topo.n_leaves)] = 1
        x = rng.uniform(0.1, 0.9, p)
        delta = rng.uniform(-1, 1, p)
        delta *= 1e-4 / np.linalg.norm(delta)
        cdf = LogisticCdf(gamma)
        diff = np.abs(class_membership(x + delta, params, C, topo, cdf)
                      - class_membership(x, params, C, topo, cdf)).max()
        assert diff <= gamma * depth / 4 * max(1, K) * 1e-4


def test_deterministic_limit():
    rng = np.random.default_rng(5)
    topo = build_topology(3)
    cdf = LogisticCdf(1e9)
    checked = 0
    for _ in range(300):
        a = rng.uniform(-1, 1, (2, 7))
        mu = rng.uniform(-1, 1, 7)
        x = rng.uniform(size=2)
        u = x @ a / 2 - mu
        if np.min(np.abs(u)) <= 1e-3:
            continue
        P = leaf_probabilities(x, SplitParameters(a, mu), topo, cdf)
        one_hot = np.zeros(8)
        one_hot[hard_route(x, a, mu, 3)] = 1.0
        np.testing.assert_allclose(P, one_hot, atol=1e-6)
        checked += 1
    assert checked > 100


# ------------------------------------------------------- class membership

def test_class_membership_single_class():
    topo = build_topology(1)
    C = np.array([[1.0, 1.0], [0.0, 0.0]])
    v = class_membership([0.2], SplitParameters([[0.3]], [0.1]), C, topo, LogisticCdf(4))
    np.testing.assert_allclose(v, [1.0, 0.0])


def test_class_membership_identity_assignment():
    topo = build_topology(1)
    v = class_membership([0.5], SplitParameters([[1.0]], [0.0]), np.eye(2), topo,
                         LogisticCdf(1))
    np.testing.assert_allclose(v, [0.622459, 0.377541], atol=1e-6)


def test_class_membership_balanced():
    topo = build_topology(2)
    C = np.array([[1, 0, 1, 0], [0, 1, 0, 1.0]])
    v = class_membership([0.7], SplitParameters.zeros(1, topo), C, topo, LogisticCdf(9))
    np.testing.assert_allclose(v, [0.5, 0.5])


# ----------------------------------------------------------- expected cost

def test_expected_cost_zero_when_perfectly_routed():
    topo = build_topology(1)
    data = Dataset([[0.0], [1.0]], [1, 0], 2)
    params = SplitParameters([[1.0]], [0.5])
    cost = expected_cost(data, params, np.eye(2), uniform_costs(2), topo, LogisticCdf(1e4))
    assert cost < 1e-15


def test_expected_cost_random_routing():
    topo = build_topology(1)
    data = Dataset([[0.2], [0.8]], [0, 1], 2)
    cost = expected_cost(data, SplitParameters.zeros(1, topo), np.eye(2), uniform_costs(2),
                         topo, LogisticCdf(512))
    assert cost == 0.25


def test_expected_cost_single_individual():
    topo = build_topology(2)
    params = params_with_branch_probs([0.9, 0.8, 0.3], 10.0)
    C = np.array([[1, 0, 0, 1], [0, 1, 1, 0.0]])
    data = Dataset([[0.5]], [0], 2)
    cost = expected_cost(data, params, C, uniform_costs(2), topo, LogisticCdf(10.0))
    assert cost == pytest.approx(0.105, abs=1e-12)


def test_expected_cost_bounded_by_max_cost():
    rng = np.random.default_rng(6)
    topo = build_topology(2)
    W = rng.uniform(0, 3, (3, 3))
    np.fill_diagonal(W, 0)
    data = Dataset(rng.uniform(size=(30, 2)), rng.integers(0, 3, 30), 3)
    C = np.zeros((3, 4))
    C[[0, 1, 2, 2], range(4)] = 1
    params = SplitParameters(rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, 3))
    assert 0 <= expected_cost(data, params, C, W, topo, LogisticCdf(4)) <= W.max()


# ---------------------------------------------------------------- decision

@pytest.mark.parametrize("proba, cls", [([0.9, 0.1], 0), ([0.5, 0.5], 0),
                                        ([0.2438, 0.7562], 1)])
def test_decide(proba, cls):
    assert decide(np.array(proba)) == cls


# ----------------------------------------------------------- serialization

def _model():
    rng = np.random.default_rng(7)
    topo = build_topology(2)
    params = SplitParameters(rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, 3))
    C = np.array([[1, 0, 0, 0], [0, 1, 1, 0], [0, 0, 0, 1.0]])
    scaling = ScalingSpec([("u", None), ("colour", ["blue", "red"])], np.array([2.0, 0, 0]),
                          np.array([4.0, 1, 1]))
    return TrainedModel(topo, params, C, LogisticCdf(512), ["a", "b", "c"], scaling,
                        objective_value=0.1 + 0.2)


def test_json_fields():
    d = json.loads(_model().to_json())
    for key in ("depth", "gamma", "p", "K", "a", "mu", "C", "feature_scaling",
                "class_labels"):
        assert key in d
    assert d["feature_scaling"]["min"] == [2.0, 0.0, 0.0]
    assert len(d["a"]) == 9 and len(d["C"]) == 12


def test_json_round_trip_is_exact():
    m = _model()
    back = model_from_json(m.to_json())
    np.testing.assert_array_equal(back.params.a, m.params.a)
    np.testing.assert_array_equal(back.params.mu, m.params.mu)
    np.testing.assert_array_equal(back.assignment, m.assignment)
    assert back.objective_value == m.objective_value
    assert back.class_labels == m.class_labels
    assert back.scaling.columns == m.scaling.columns
    assert back.to_json() == m.to_json()


def test_predict_one():
    m = _model()
    k, proba = m.predict_one([0.2, 1.0, 0.0])
    assert k == int(np.argmax(proba))
    assert proba.sum() == pytest.approx(1.0, abs=1e-12)
