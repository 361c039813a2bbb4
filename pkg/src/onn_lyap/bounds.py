"""Closed-form theoretical-limit calculators used as diagnostics and
cross-checks against measured quantities."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .graph_core import WeightedGraph, bfs_diameter


@dataclass(frozen=True)
class LimitReport:
    spectral_lower: float
    info_iterations: float
    min_edges: int
    laman_edges: int
    oracle_sparse_flops: float
    oracle_dense_flops: float

    def to_dict(self) -> dict:
        return {
            "spectral_lower": self.spectral_lower,
            "info_iterations": self.info_iterations,
            "min_edges": self.min_edges,
            "laman_edges": self.laman_edges,
            "oracle_sparse_flops": self.oracle_sparse_flops,
            "oracle_dense_flops": self.oracle_dense_flops,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def spectral_lower_bound(n: int, diam: int) -> float:
    """Spectral-gap lower bound 4 / (n^2 diam^2) for connected graphs."""
    if n < 2 or diam < 1:
        raise ValueError(f"need n >= 2 and diam >= 1, got n={n}, diam={diam}")
    return 4.0 / (n * n * diam * diam)


def spectral_lower_bound_graph(g: WeightedGraph) -> float:
    """Bound evaluated with the BFS hop diameter of the supplied graph."""
    return spectral_lower_bound(g.n, max(bfs_diameter(g), 1))


def path_tightness(lambda2: float, n: int) -> float:
    """Diameter-normalized tightness factor lambda2 * n^2 / 4 for path graphs.

    Approaches pi^2 / 4 from below as n grows, so the factor stays within
    [1, 2.5] for every path length.
    """
    return lambda2 * n * n / 4.0


def info_iterations(n: float, delta: float, epsilon: float) -> float:
    """Information-theoretic iteration floor n / (delta * ln(1/epsilon)).

    Natural logarithm throughout, matching the arithmetic that produces the
    reference value 7.2e5 at (3e6, 0.6, 1e-3). Returns +inf when epsilon -> 1
    removes the accuracy demand.
    """
    if n < 1 or not 0.0 < delta <= 1.0 or not 0.0 < epsilon < 1.0:
        raise ValueError(
            f"need n >= 1, 0 < delta <= 1, 0 < epsilon < 1; got {(n, delta, epsilon)}")
    log_term = math.log(1.0 / epsilon)
    if log_term == 0.0:
        return math.inf
    return n / (delta * log_term)


def min_edges(n: int, beta0: int, genus: int) -> int:
    """Minimal edge count n - beta0 + genus preserving the homology class."""
    if beta0 < 1 or genus < 0 or n < beta0:
        raise ValueError(f"need beta0 >= 1, genus >= 0, n >= beta0; got {(n, beta0, genus)}")
    return n - beta0 + genus


def laman_edges(n: int, dim: int) -> int:
    """Edge count d*n - C(d+1, 2) of a minimally rigid graph in R^d.

    The planar case reduces to 2n - 3.
    """
    if n < dim + 1:
        raise ValueError(f"need n >= dim + 1, got n={n}, dim={dim}")
    return dim * n - math.comb(dim + 1, 2)


def oracle_cost(n: float, d: float, k: float) -> tuple:
    """(sparse, dense) leading-term flop estimates k*n*d + n*d^2 and n^2*d."""
    if n <= 0 or d <= 0 or k <= 0:
        raise ValueError(f"need positive arguments, got {(n, d, k)}")
    return k * n * d + n * d * d, n * n * d


def limit_report(g: WeightedGraph, d: int = 1, k: float = 2.0,
                 delta: float = 0.6, epsilon: float = 1e-3,
                 beta0: int = 1, genus: int = 0, rigidity_dim: int = 2) -> LimitReport:
    """All closed-form limits evaluated for one graph."""
    sparse, dense = oracle_cost(g.n, d, k)
    return LimitReport(
        spectral_lower=spectral_lower_bound_graph(g),
        info_iterations=info_iterations(g.n, delta, epsilon),
        min_edges=min_edges(g.n, beta0, genus),
        laman_edges=laman_edges(g.n, rigidity_dim),
        oracle_sparse_flops=sparse,
        oracle_dense_flops=dense,
    )
