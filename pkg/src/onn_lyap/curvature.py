"""Forman-Ricci edge curvature, curvature losses, and threshold pruning.

Edge curvature depends only on weights and degrees, so the field is a pure
function of the graph. The threshold rule keeps the highest-curvature edges
down to a degree target, with a union-find guard that never disconnects the
graph.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import Disconnected, IsolatedNode
from .graph_core import UnionFind, WeightedGraph, is_connected, replace_edges


@dataclass(frozen=True)
class CurvatureField:
    """Per-edge Forman-Ricci curvature, keyed by (u, v) with u < v."""
    kappa: dict
    kappa_min_target: float = 0.0

    def __getitem__(self, edge) -> float:
        u, v = edge
        if u > v:
            u, v = v, u
        return self.kappa[(u, v)]

    def min_value(self) -> float:
        return min(self.kappa.values())


def forman_curvature(g: WeightedGraph, kappa_min_target: float = 0.0) -> CurvatureField:
    """Forman-Ricci curvature for every edge.

    kappa(u,v) = w_uv (1/sqrt(d_u) + 1/sqrt(d_v))
                 - sum_{k~u, k!=v} w_uk / sqrt(d_k)
                 - sum_{k~v, k!=u} w_vk / sqrt(d_k)

    Total work is O(sum of squared degrees).
    """
    inv_sqrt = []
    for i, d in enumerate(g.degree):
        if d <= 0.0:
            raise IsolatedNode(f"node {i} has zero degree")
        inv_sqrt.append(1.0 / math.sqrt(d))

    # Per-node sums of w_uk / sqrt(d_k) over all neighbors, computed once.
    nbr_sum = [0.0] * g.n
    for u in range(g.n):
        nbr_sum[u] = sum(w * inv_sqrt[v] for v, w in g.neighbors(u))

    kappa = {}
    for u, v, w in g.edges:
        side_u = nbr_sum[u] - w * inv_sqrt[v]
        side_v = nbr_sum[v] - w * inv_sqrt[u]
        kappa[(u, v)] = w * (inv_sqrt[u] + inv_sqrt[v]) - side_u - side_v
    return CurvatureField(kappa=kappa, kappa_min_target=kappa_min_target)


def ricci_loss(g: WeightedGraph, variant: str = "hinge_zero",
               kappa_min: float = 0.0) -> float:
    """Curvature penalty over all edges.

    hinge_zero sums the positive parts of -kappa; hinge_target sums squared
    hinges max(0, kappa_min - kappa)^2. Both vanish when every edge meets the
    required curvature level.
    """
    field = forman_curvature(g)
    if variant == "hinge_zero":
        return sum(max(0.0, -k) for k in field.kappa.values())
    if variant == "hinge_target":
        return sum(max(0.0, kappa_min - k) ** 2 for k in field.kappa.values())
    raise ValueError(f"unknown ricci loss variant: {variant!r}")


def curvature_consistency_loss(g: WeightedGraph, rho: float = 1.0,
                               kappa_min: float = 0.0) -> float:
    """Frobenius penalty of the curvature field against a zero target plus a
    rho-weighted mean hinge. The zero target is a stand-in; the weight of this
    term defaults to 0 in LossConfig."""
    field = forman_curvature(g)
    values = list(field.kappa.values())
    # Symmetric matrix convention: each edge appears twice in the field matrix.
    sq = 2.0 * sum(k * k for k in values)
    hinge = sum(max(0.0, kappa_min - k) for k in values) / max(len(values), 1)
    return sq + rho * hinge


def ricci_threshold_edges(g: WeightedGraph, target_degree: float) -> tuple:
    """Keep-set of the curvature threshold rule: the smallest top-ranked edge
    set whose average degree reaches target_degree, plus connectivity-forced
    edges.

    Edges are ranked by curvature descending with (u, v) lexicographic
    tie-breaks. A union-find pass in rank order marks the edges of the
    maximum-curvature spanning tree as forced, so the keep-set always
    contains a spanning tree of g. Returns (keep, threshold) where keep is a
    set of (u, v) pairs and threshold is the cut value below the kept ranks.
    """
    if not is_connected(g):
        raise Disconnected("threshold pruning requires a connected graph")
    field = forman_curvature(g)
    ranked = sorted(g.edges, key=lambda e: (-field.kappa[(e[0], e[1])], e[0], e[1]))

    need = math.ceil(target_degree * g.n / 2.0)
    keep = {(u, v) for u, v, _ in ranked[:need]}

    uf = UnionFind(g.n)
    for u, v, _ in ranked:
        if uf.union(u, v):
            keep.add((u, v))

    kept_kappas = [field.kappa[e] for e in keep]
    dropped = [field.kappa[(u, v)] for u, v, _ in g.edges if (u, v) not in keep]
    threshold = max(dropped) if dropped else min(kept_kappas) - 1.0
    return keep, threshold


def apply_keep_set(g: WeightedGraph, keep: set) -> WeightedGraph:
    """Graph restricted to the kept edges (weights preserved)."""
    return replace_edges(g, [(u, v, w) for u, v, w in g.edges if (u, v) in keep])


def export_curvature_csv(field: CurvatureField, path) -> None:
    """CSV export `u,v,kappa` sorted by (u, v)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v", "kappa"])
        for (u, v) in sorted(field.kappa):
            writer.writerow([u, v, repr(field.kappa[(u, v)])])
