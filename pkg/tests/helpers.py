"""Shared oracles and graph builders for the test suite.

Oracles here are deliberately independent of the library code paths they
check: dense matrix algebra instead of edge sums, exhaustive enumeration
instead of union-find shortcuts, brute-force matchings instead of binary
search.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from onn_lyap.graph_core import WeightedGraph, build_graph


def path_graph(n, w=1.0):
    return build_graph(n, [(i, i + 1, w) for i in range(n - 1)])


def cycle_graph(n, w=1.0):
    return build_graph(n, [(i, (i + 1) % n, w) for i in range(n)])


def complete_graph(n, w=1.0):
    return build_graph(n, [(i, j, w) for i in range(n) for j in range(i + 1, n)])


def star_graph(n, w=1.0):
    return build_graph(n, [(0, i, w) for i in range(1, n)])


def random_connected_graph(rng, n, extra_edges=3, weight_range=(0.2, 1.5)):
    """Random spanning tree plus a few extra edges; always connected."""
    order = rng.permutation(n)
    pairs = set()
    for i in range(1, n):
        a = int(order[i])
        b = int(order[int(rng.integers(0, i))])
        pairs.add((min(a, b), max(a, b)))
    attempts = 0
    while len(pairs) < n - 1 + extra_edges and attempts < 50 * extra_edges:
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        if u != v:
            pairs.add((min(u, v), max(u, v)))
        attempts += 1
    lo, hi = weight_range
    return build_graph(
        n, [(u, v, float(rng.uniform(lo, hi))) for u, v in sorted(pairs)])


def dense_laplacian_oracle(g: WeightedGraph) -> np.ndarray:
    """L = D - A built straight from a dense adjacency matrix."""
    a = np.zeros((g.n, g.n))
    for u, v, w in g.edges:
        a[u, v] = w
        a[v, u] = w
    return np.diag(a.sum(axis=1)) - a


def consensus_trace_oracle(values: np.ndarray, g: WeightedGraph) -> float:
    """1/2 tr(S^T L S) by dense matrix products."""
    lap = dense_laplacian_oracle(g)
    return 0.5 * float(np.trace(values.T @ lap @ values))


def brute_force_bottleneck(pairs_a, pairs_b) -> float:
    """Exact bottleneck for tiny finite diagrams by enumerating every way to
    match points across diagrams, sending the rest to the diagonal."""
    def linf(p, q):
        return max(abs(p[0] - q[0]), abs(p[1] - q[1]))

    def diag(p):
        return (p[1] - p[0]) / 2.0

    na, nb = len(pairs_a), len(pairs_b)
    best = math.inf
    for size in range(min(na, nb) + 1):
        for subset_a in itertools.combinations(range(na), size):
            rest_a = [i for i in range(na) if i not in subset_a]
            for subset_b in itertools.permutations(range(nb), size):
                cost = 0.0
                for i, j in zip(subset_a, subset_b):
                    cost = max(cost, linf(pairs_a[i], pairs_b[j]))
                for i in rest_a:
                    cost = max(cost, diag(pairs_a[i]))
                for j in range(nb):
                    if j not in subset_b:
                        cost = max(cost, diag(pairs_b[j]))
                best = min(best, cost)
    return best


def connectivity_oracle(n, pairs) -> int:
    """Component count by BFS over an explicit adjacency list."""
    adj = {i: [] for i in range(n)}
    for u, v in pairs:
        adj[u].append(v)
        adj[v].append(u)
    seen = set()
    comps = 0
    for start in range(n):
        if start in seen:
            continue
        comps += 1
        queue = [start]
        seen.add(start)
        while queue:
            x = queue.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
    return comps
