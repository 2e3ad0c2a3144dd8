"""Slow, literal reference implementations used only to check the library."""
from __future__ import annotations

import itertools
import math

import numpy as np


def logistic(u, gamma):
    z = gamma * u
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def branch_probs_literal(x, a, mu, gamma):
    """Left probability of every branch node, one scalar at a time."""
    p = len(x)
    out = []
    for t in range(a.shape[1]):
        u = sum(a[j, t] * x[j] for j in range(p)) / p - mu[t]
        out.append(logistic(u, gamma))
    return out


def leaf_probs_literal(x, a, mu, gamma, depth):
    """Product over the ancestors of each leaf, walking up from the leaf."""
    probs = branch_probs_literal(x, a, mu, gamma)
    n_leaves = 2 ** depth
    out = []
    for t in range(n_leaves, 2 * n_leaves):
        prod, node = 1.0, t
        while node > 1:
            parent = node // 2
            prod *= probs[parent - 1] if node % 2 == 0 else 1.0 - probs[parent - 1]
            node = parent
        out.append(prod)
    return np.array(out)


def cost_literal(X, y, a, mu, C, W, gamma, depth):
    total = 0.0
    for x, yi in zip(X, y):
        P = leaf_probs_literal(x, a, mu, gamma, depth)
        for t in range(P.size):
            for k in range(C.shape[0]):
                total += P[t] * W[yi, k] * C[k, t]
    return total / len(y)


def central_difference(f, a, mu, h=1e-5):
    """Central differences of ``f(a, mu)`` in every coordinate."""
    d_a = np.zeros_like(a)
    d_mu = np.zeros_like(mu)
    for idx in np.ndindex(a.shape):
        ap, am = a.copy(), a.copy()
        ap[idx] += h
        am[idx] -= h
        d_a[idx] = (f(ap, mu) - f(am, mu)) / (2 * h)
    for t in range(mu.size):
        mp, mm = mu.copy(), mu.copy()
        mp[t] += h
        mm[t] -= h
        d_mu[t] = (f(a, mp) - f(a, mm)) / (2 * h)
    return d_a, d_mu


def brute_force_labels(q, coverage=True):
    """Best labeling by enumeration of all ``K ** L`` candidates.

    The value of each candidate is summed with ``math.fsum`` so that equal
    labelings compare equal regardless of summation order.
    """
    q = np.asarray(q, dtype=float)
    K, L = q.shape
    best, best_val = None, math.inf
    for labels in itertools.product(range(K), repeat=L):
        if coverage and len(set(labels)) < K:
            continue
        val = math.fsum(q[labels[t], t] for t in range(L))
        if val < best_val:
            best, best_val = np.array(labels), val
    return best, best_val


def hard_route(x, a, mu, depth):
    """Leaf reached when every branch sends nonnegative arguments left."""
    p = len(x)
    node = 1
    for _ in range(depth):
        u = sum(a[j, node - 1] * x[j] for j in range(p)) / p - mu[node - 1]
        node = 2 * node if u >= 0 else 2 * node + 1
    return node - 2 ** depth


def dense_least_squares(P, y, ridge=0.0):
    """``argmin ||P phi - y||^2 + ridge ||phi||^2`` via an augmented SVD solve."""
    L = P.shape[1]
    A = np.vstack([P, math.sqrt(ridge) * np.eye(L)])
    b = np.concatenate([y, np.zeros(L)])
    return np.linalg.lstsq(A, b, rcond=None)[0]
