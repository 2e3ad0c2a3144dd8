"""Maximal binary tree of fixed depth.

Nodes are numbered breadth-first starting at 1 for the root; the children
of node ``t`` are ``2t`` (left) and ``2t + 1`` (right).  Branch nodes are
``1 .. 2**D - 1`` and leaves ``2**D .. 2**(D+1) - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_DEPTH = 10


@dataclass(frozen=True)
class TreeTopology:
    depth: int
    total_nodes: int
    branch_nodes: tuple[int, ...]
    leaf_nodes: tuple[int, ...]
    left_ancestors: dict[int, frozenset[int]] = field(repr=False)
    right_ancestors: dict[int, frozenset[int]] = field(repr=False)

    @property
    def n_branch(self) -> int:
        return len(self.branch_nodes)

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_nodes)

    def ancestors(self, leaf: int) -> frozenset[int]:
        return self.left_ancestors[leaf] | self.right_ancestors[leaf]

    def routing_signs(self) -> np.ndarray:
        """Matrix ``S`` of shape (n_leaves, n_branch).

        ``S[l, b]`` is +1 when branch ``b`` is left-taken on the path to
        leaf ``l``, -1 when right-taken and 0 when ``b`` is not an ancestor.
        """
        return _routing_signs(self.depth).copy()


def build_topology(depth: int) -> TreeTopology:
    """Build the maximal binary tree of the given depth."""
    if isinstance(depth, bool) or not isinstance(depth, (int, np.integer)):
        raise TypeError(f"depth must be an integer, got {type(depth).__name__}")
    depth = int(depth)
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if depth > MAX_DEPTH:
        raise ValueError(f"depth must be <= {MAX_DEPTH}, got {depth}")
    return _build(depth)


@lru_cache(maxsize=None)
def _build(depth: int) -> TreeTopology:
    total = 2 ** (depth + 1) - 1
    n_branch = total // 2
    branch = tuple(range(1, n_branch + 1))
    leaves = tuple(range(n_branch + 1, total + 1))
    left: dict[int, frozenset[int]] = {}
    right: dict[int, frozenset[int]] = {}
    for leaf in leaves:
        nl, nr = set(), set()
        node = leaf
        while node > 1:
            parent = node // 2
            (nl if node % 2 == 0 else nr).add(parent)
            node = parent
        left[leaf] = frozenset(nl)
        right[leaf] = frozenset(nr)
    return TreeTopology(depth, total, branch, leaves, left, right)


@lru_cache(maxsize=None)
def _routing_signs(depth: int) -> np.ndarray:
    topo = _build(depth)
    signs = np.zeros((topo.n_leaves, topo.n_branch))
    for l, leaf in enumerate(topo.leaf_nodes):
        for b in topo.left_ancestors[leaf]:
            signs[l, b - 1] = 1.0
        for b in topo.right_ancestors[leaf]:
            signs[l, b - 1] = -1.0
    signs.flags.writeable = False
    return signs


def path_sets(topology: TreeTopology, leaf: int) -> tuple[frozenset[int], frozenset[int]]:
    """Return ``(N_L(leaf), N_R(leaf))``: ancestors whose left/right branch is on the path."""
    if leaf not in topology.left_ancestors:
        raise ValueError(f"node {leaf} is not a leaf of a depth-{topology.depth} tree")
    return topology.left_ancestors[leaf], topology.right_ancestors[leaf]
