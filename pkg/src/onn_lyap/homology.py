"""Betti numbers, weight-filtration persistence, bottleneck distance, and the
Betti-preservation gate used by surgery.

Graphs are 1-complexes: beta0 comes from union-find, beta1 from the Euler
formula, and dim-1 persistence classes never die. The filtration is the
sublevel filtration of edge weights with all vertices born at 0.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateEdge, EdgeNotFound, InfiniteDistance
from .graph_core import UnionFind, WeightedGraph, betti_numbers

INF = math.inf


@dataclass(frozen=True)
class BettiPair:
    beta0: int
    beta1: int

    def as_tuple(self) -> tuple:
        return (self.beta0, self.beta1)


@dataclass(frozen=True)
class PersistenceDiagram:
    """Multisets of (birth, death) pairs; death is math.inf for essential
    classes. dim0 holds exactly n pairs, dim1 holds beta1 pairs."""
    dim0: tuple
    dim1: tuple

    def essential_count(self, dim: int) -> int:
        pairs = self.dim0 if dim == 0 else self.dim1
        return sum(1 for _, d in pairs if math.isinf(d))


def betti(g: WeightedGraph) -> BettiPair:
    """(beta0, beta1) of the graph with all positive-weight edges present."""
    b0, b1 = betti_numbers(g)
    return BettiPair(beta0=b0, beta1=b1)


def persistence(g: WeightedGraph) -> PersistenceDiagram:
    """Sublevel-filtration persistence diagram.

    Edges enter at their weight in (w, u, v) lexicographic order; vertices are
    born at 0. A merge kills the younger component, with the elder rule that
    the component containing the smaller minimum node index survives a tie.
    Cycle-closing edges create essential dim-1 classes born at their weight.
    """
    dim0 = []
    dim1 = []
    uf = UnionFind(g.n)
    # Minimum node index per component root, for deterministic elder breaks.
    min_index = list(range(g.n))

    for u, v, w in sorted(g.edges, key=lambda e: (e[2], e[0], e[1])):
        ru, rv = uf.find(u), uf.find(v)
        if ru == rv:
            dim1.append((w, INF))
            continue
        # Both components were born at 0; the one with the larger minimum
        # node index dies at w.
        survivor_min = min(min_index[ru], min_index[rv])
        dim0.append((0.0, w))
        uf.union(u, v)
        min_index[uf.find(u)] = survivor_min

    for _ in range(uf.components):
        dim0.append((0.0, INF))
    return PersistenceDiagram(dim0=tuple(dim0), dim1=tuple(dim1))


def critical_gap(diagram: PersistenceDiagram) -> float:
    """Minimum gap between consecutive distinct critical values (diagnostic).

    Critical values are the finite births and deaths across both dimensions.
    Returns math.inf when fewer than two distinct values exist.
    """
    values = set()
    for b, d in diagram.dim0 + diagram.dim1:
        values.add(b)
        if not math.isinf(d):
            values.add(d)
    ordered = sorted(values)
    if len(ordered) < 2:
        return INF
    return min(b - a for a, b in zip(ordered, ordered[1:]))


# ---------------------------------------------------------------------------
# Bottleneck distance
# ---------------------------------------------------------------------------

def _linf(p, q) -> float:
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]))


def _diag_cost(p) -> float:
    return (p[1] - p[0]) / 2.0


def _saturating_matching_size(must, adjacency, right_count) -> int:
    """Max matching size restricted to saturating the `must` left nodes,
    by simple augmenting paths."""
    match_right = [-1] * right_count
    matched = 0
    for i in must:
        seen = [False] * right_count
        if _augment(i, adjacency, match_right, seen):
            matched += 1
    return matched


def _augment(i, adjacency, match_right, seen) -> bool:
    for j in adjacency[i]:
        if not seen[j]:
            seen[j] = True
            if match_right[j] < 0 or _augment(match_right[j], adjacency, match_right, seen):
                match_right[j] = i
                return True
    return False


def _finite_feasible(pts_a, pts_b, eps: float) -> bool:
    """A matching within cost eps exists where every unmatched point sits
    within eps of the diagonal.

    A matching saturating both must-match sets exists iff each set can be
    saturated separately (union-of-matchings exchange argument), so two
    one-sided saturation checks suffice.
    """
    tol = 1e-12 * max(1.0, eps)
    adj_a = [
        [j for j, q in enumerate(pts_b) if _linf(p, q) <= eps + tol]
        for p in pts_a
    ]
    must_a = [i for i, p in enumerate(pts_a) if _diag_cost(p) > eps + tol]
    if _saturating_matching_size(must_a, adj_a, len(pts_b)) < len(must_a):
        return False
    adj_b = [
        [i for i, p in enumerate(pts_a) if _linf(p, q) <= eps + tol]
        for q in pts_b
    ]
    must_b = [j for j, q in enumerate(pts_b) if _diag_cost(q) > eps + tol]
    return _saturating_matching_size(must_b, adj_b, len(pts_a)) >= len(must_b)


def bottleneck(pd_a: PersistenceDiagram, pd_b: PersistenceDiagram, dim: int) -> float:
    """Exact bottleneck distance in the requested dimension.

    Essential classes must agree in count and are matched among themselves in
    sorted birth order; finite pairs are matched by binary search over the
    candidate cost values with bipartite feasibility tests. Intended for
    diagrams of at most ~10^3 points.
    """
    pairs_a = pd_a.dim0 if dim == 0 else pd_a.dim1
    pairs_b = pd_b.dim0 if dim == 0 else pd_b.dim1

    ess_a = sorted(b for b, d in pairs_a if math.isinf(d))
    ess_b = sorted(b for b, d in pairs_b if math.isinf(d))
    if len(ess_a) != len(ess_b):
        raise InfiniteDistance(
            f"essential class counts differ in dim {dim}: "
            f"{len(ess_a)} vs {len(ess_b)} (distance is infinite)"
        )
    ess_cost = max((abs(a - b) for a, b in zip(ess_a, ess_b)), default=0.0)

    fin_a = [(b, d) for b, d in pairs_a if not math.isinf(d)]
    fin_b = [(b, d) for b, d in pairs_b if not math.isinf(d)]
    if not fin_a and not fin_b:
        return ess_cost

    candidates = {0.0, ess_cost}
    for p in fin_a:
        candidates.add(_diag_cost(p))
        for q in fin_b:
            candidates.add(_linf(p, q))
    for q in fin_b:
        candidates.add(_diag_cost(q))
    ordered = sorted(c for c in candidates if c >= ess_cost)

    lo, hi = 0, len(ordered) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _finite_feasible(fin_a, fin_b, ordered[mid]):
            hi = mid
        else:
            lo = mid + 1
    return ordered[lo]


# ---------------------------------------------------------------------------
# Homology loss and the surgery gate
# ---------------------------------------------------------------------------

def homology_loss(g: WeightedGraph, targets: BettiPair) -> float:
    """Squared Betti deviation (b0 - b0*)^2 + (b1 - b1*)^2."""
    b = betti(g)
    return float((b.beta0 - targets.beta0) ** 2 + (b.beta1 - targets.beta1) ** 2)


def move_preserves_betti(g: WeightedGraph, removal=None, addition=None) -> bool:
    """True iff removing `removal` and adding `addition` leaves (b0, b1)
    unchanged. The check runs union-find on the hypothetical edge set without
    mutating g."""
    edge_set = {(u, v) for u, v, _ in g.edges}
    if removal is not None:
        ru, rv = min(removal[0], removal[1]), max(removal[0], removal[1])
        if (ru, rv) not in edge_set:
            raise EdgeNotFound(f"edge ({ru},{rv}) not in graph")
        edge_set.discard((ru, rv))
    if addition is not None:
        au, av = min(addition[0], addition[1]), max(addition[0], addition[1])
        if (au, av) in edge_set:
            raise DuplicateEdge(f"edge ({au},{av}) already present")
        edge_set.add((au, av))

    uf = UnionFind(g.n)
    for u, v in edge_set:
        uf.union(u, v)
    b0 = uf.components
    b1 = len(edge_set) - g.n + b0
    return (b0, b1) == betti_numbers(g)


def export_diagram_csv(diagram: PersistenceDiagram, path) -> None:
    """CSV export `dim,birth,death` with `inf` for essential classes."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dim", "birth", "death"])
        for b, d in diagram.dim0:
            writer.writerow([0, repr(b), "inf" if math.isinf(d) else repr(d)])
        for b, d in diagram.dim1:
            writer.writerow([1, repr(b), "inf" if math.isinf(d) else repr(d)])
