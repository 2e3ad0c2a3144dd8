import itertools

import numpy as np
import pytest

from orct.topology import build_topology, path_sets


def test_depth_two_layout():
    topo = build_topology(2)
    assert topo.total_nodes == 7
    assert topo.branch_nodes == (1, 2, 3)
    assert topo.leaf_nodes == (4, 5, 6, 7)


def test_depth_one_layout():
    topo = build_topology(1)
    assert topo.branch_nodes == (1,)
    assert topo.leaf_nodes == (2, 3)
    assert path_sets(topo, 2) == ({1}, set())
    assert path_sets(topo, 3) == (set(), {1})


@pytest.mark.parametrize("leaf, left, right", [(4, {1, 2}, set()), (7, set(), {1, 3}),
                                               (5, {1}, {2})])
def test_path_sets_depth_two(leaf, left, right):
    assert path_sets(build_topology(2), leaf) == (left, right)


@pytest.mark.parametrize("depth", range(1, 11))
def test_invariants(depth):
    topo = build_topology(depth)
    assert topo.total_nodes == 2 ** (depth + 1) - 1
    assert topo.n_branch == 2 ** depth - 1
    assert topo.n_leaves == 2 ** depth
    pairs = set()
    for leaf in topo.leaf_nodes:
        left, right = path_sets(topo, leaf)
        assert not left & right
        assert len(left | right) == depth
        pairs.add((frozenset(left), frozenset(right)))
    assert len(pairs) == topo.n_leaves


@pytest.mark.parametrize("depth", range(1, 7))
def test_routing_events_exhaustive(depth):
    """Each left/right choice per branch node selects exactly one leaf."""
    topo = build_topology(depth)
    rng = np.random.default_rng(depth)
    choices = (itertools.product([True, False], repeat=topo.n_branch) if depth <= 4
               else (tuple(rng.random(topo.n_branch) < 0.5) for _ in range(200)))
    for go_left in choices:
        hits = [leaf for leaf in topo.leaf_nodes
                if all(go_left[b - 1] for b in topo.left_ancestors[leaf])
                and not any(go_left[b - 1] for b in topo.right_ancestors[leaf])]
        assert len(hits) == 1


def test_routing_signs():
    S = build_topology(2).routing_signs()
    expected = np.array([[1, 1, 0], [1, -1, 0], [-1, 0, 1], [-1, 0, -1]])
    np.testing.assert_array_equal(S, expected)


def test_deterministic():
    assert build_topology(3) == build_topology(3)


@pytest.mark.parametrize("bad", [0, -1, 11])
def test_bad_depth(bad):
    with pytest.raises(ValueError):
        build_topology(bad)


def test_non_integer_depth():
    with pytest.raises(TypeError):
        build_topology(2.0)


def test_path_sets_rejects_branch_node():
    with pytest.raises(ValueError):
        path_sets(build_topology(2), 3)
