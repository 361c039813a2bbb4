"""Weighted-graph representation, Laplacians, spectra, and admissibility checks.

The graph value type is immutable after construction: edges are stored once
with u < v, weights are strictly positive, and per-node degrees are cached.
Dense matrices are materialized only up to DENSE_LIMIT nodes; beyond that the
spectrum is obtained from a deterministic Lanczos solver that returns the
spectral gap and the largest eigenvalue.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConvergenceFailure,
    Disconnected,
    DuplicateEdge,
    FileFormat,
    IndexOutOfRange,
    IsolatedNode,
    NegativeWeight,
    SelfLoop,
)

DENSE_LIMIT = 2048

# Iterative solver: relative tolerance and step cap for the Lanczos sweep.
LANCZOS_TOL = 1e-8
LANCZOS_CAP = 1200


class UnionFind:
    """Union-find with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.components = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.components -= 1
        return True


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric non-negative weighted graph with cached degrees.

    edges holds (u, v, w) triples with u < v and w > 0; zero-weight edges are
    absent by convention. degree[i] is the sum of weights incident to i.
    """
    n: int
    edges: tuple
    degree: tuple
    _adjacency: dict = field(repr=False, compare=False, default=None)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int) -> tuple:
        """Neighbors of u as (v, w) pairs, ascending by v."""
        return self._adjacency[u]

    def has_edge(self, u: int, v: int) -> bool:
        return any(x == v for x, _ in self._adjacency[u])

    def edge_weight(self, u: int, v: int) -> float:
        for x, w in self._adjacency[u]:
            if x == v:
                return w
        raise KeyError((u, v))


def build_graph(n: int, edge_list) -> WeightedGraph:
    """Construct a canonical WeightedGraph from an edge list.

    Rejects out-of-range endpoints, self-loops, duplicate unordered pairs and
    negative weights. Edges with weight exactly 0 are dropped.
    """
    if n < 0:
        raise IndexOutOfRange(f"node count must be non-negative, got {n}")
    seen = set()
    canonical = []
    for u, v, w in edge_list:
        if not (0 <= u < n and 0 <= v < n):
            raise IndexOutOfRange(f"edge ({u},{v}) outside [0,{n})")
        if u == v:
            raise SelfLoop(f"self-loop at node {u}")
        if w < 0:
            raise NegativeWeight(f"edge ({u},{v}) has weight {w}")
        a, b = (u, v) if u < v else (v, u)
        if (a, b) in seen:
            raise DuplicateEdge(f"duplicate edge ({a},{b})")
        seen.add((a, b))
        if w > 0:
            canonical.append((a, b, float(w)))
    canonical.sort(key=lambda e: (e[0], e[1]))

    degree = [0.0] * n
    adjacency = {i: [] for i in range(n)}
    for u, v, w in canonical:
        degree[u] += w
        degree[v] += w
        adjacency[u].append((v, w))
        adjacency[v].append((u, w))
    for i in range(n):
        adjacency[i] = tuple(sorted(adjacency[i]))

    return WeightedGraph(
        n=n,
        edges=tuple(canonical),
        degree=tuple(degree),
        _adjacency=adjacency,
    )


def replace_edges(g: WeightedGraph, edge_list) -> WeightedGraph:
    """New graph on the same node set with a different edge list."""
    return build_graph(g.n, edge_list)


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

def adjacency_matrix(g: WeightedGraph) -> np.ndarray:
    a = np.zeros((g.n, g.n))
    for u, v, w in g.edges:
        a[u, v] = w
        a[v, u] = w
    return a


def laplacian(g: WeightedGraph) -> np.ndarray:
    """Combinatorial Laplacian L = D - A. Row sums are exactly zero."""
    lap = np.zeros((g.n, g.n))
    for u, v, w in g.edges:
        lap[u, v] -= w
        lap[v, u] -= w
        lap[u, u] += w
        lap[v, v] += w
    return lap


def normalized_laplacian(g: WeightedGraph) -> np.ndarray:
    """Normalized Laplacian D^{-1/2} (D - A) D^{-1/2}; eigenvalues lie in [0, 2]."""
    isolated = [i for i in range(g.n) if g.degree[i] <= 0.0]
    if isolated:
        raise IsolatedNode(f"nodes with zero degree: {isolated}")
    inv_sqrt = np.array([1.0 / math.sqrt(d) for d in g.degree])
    lap = laplacian(g)
    return lap * np.outer(inv_sqrt, inv_sqrt)


# ---------------------------------------------------------------------------
# Connectivity and Betti counts
# ---------------------------------------------------------------------------

def component_count(g: WeightedGraph) -> int:
    uf = UnionFind(g.n)
    for u, v, _ in g.edges:
        uf.union(u, v)
    return uf.components


def is_connected(g: WeightedGraph) -> bool:
    return g.n <= 1 or component_count(g) == 1

def betti_numbers(g: WeightedGraph) -> tuple:
    """(beta0, beta1) via union-find and the Euler formula b1 = E - V + b0."""
    b0 = component_count(g) if g.n > 0 else 0
    b1 = g.edge_count - g.n + b0
    return b0, b1


def bfs_diameter(g: WeightedGraph) -> int:
    """Hop-count diameter (weights ignored). Requires a connected graph."""
    if not is_connected(g):
        raise Disconnected("diameter undefined for disconnected graphs")
    if g.n <= 1:
        return 0
    diam = 0
    for source in range(g.n):
        dist = [-1] * g.n
        dist[source] = 0
        queue = [source]
        head = 0
        while head < len(queue):
            x = queue[head]
            head += 1
            for y, _ in g.neighbors(x):
                if dist[y] < 0:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        diam = max(diam, max(dist))
    return diam


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    """Ascending Laplacian eigenvalues with the gap and the top eigenvalue.

    Dense mode carries the full list; iterative mode carries the computed
    extremes only (0, lambda2, lambda_max).
    """
    eigenvalues: tuple
    lambda2: float
    lambda_max: float
    dense: bool = True


def _select_laplacian(g: WeightedGraph, which: str) -> np.ndarray:
    if which == "combinatorial":
        return laplacian(g)
    if which == "normalized":
        return normalized_laplacian(g)
    raise ValueError(f"unknown Laplacian kind: {which!r}")


def spectrum(g: WeightedGraph, which: str = "combinatorial") -> Spectrum:
    """Laplacian spectrum: dense eigendecomposition up to DENSE_LIMIT nodes,
    deterministic Lanczos extremes beyond."""
    if g.n < 1:
        raise IndexOutOfRange("spectrum requires at least one node")
    if g.n <= DENSE_LIMIT:
        lap = _select_laplacian(g, which)
        evals = np.linalg.eigvalsh(lap)
        lam2 = float(evals[1]) if g.n >= 2 else 0.0
        return Spectrum(
            eigenvalues=tuple(float(x) for x in evals),
            lambda2=lam2,
            lambda_max=float(evals[-1]),
            dense=True,
        )
    lam2, lam_max = iterative_extremes(g, which)
    return Spectrum(
        eigenvalues=(0.0, lam2, lam_max),
        lambda2=lam2,
        lambda_max=lam_max,
        dense=False,
    )


def _laplacian_matvec(g: WeightedGraph, which: str):
    """Returns (matvec, kernel_vector) for the requested Laplacian without
    materializing the matrix."""
    n = g.n
    us = np.array([e[0] for e in g.edges], dtype=np.intp)
    vs = np.array([e[1] for e in g.edges], dtype=np.intp)
    ws = np.array([e[2] for e in g.edges])
    deg = np.array(g.degree)
    if which == "combinatorial":
        def matvec(x):
            out = deg * x
            np.subtract.at(out, us, ws * x[vs])
            np.subtract.at(out, vs, ws * x[us])
            return out
        kernel = np.ones(n)
    elif which == "normalized":
        if np.any(deg <= 0):
            raise IsolatedNode("normalized Laplacian requires positive degrees")
        inv_sqrt = 1.0 / np.sqrt(deg)
        def matvec(x):
            out = x.copy()
            np.subtract.at(out, us, ws * inv_sqrt[us] * inv_sqrt[vs] * x[vs])
            np.subtract.at(out, vs, ws * inv_sqrt[us] * inv_sqrt[vs] * x[us])
            return out
        kernel = np.sqrt(deg)
    else:
        raise ValueError(f"unknown Laplacian kind: {which!r}")
    return matvec, kernel / np.linalg.norm(kernel)


def iterative_extremes(g: WeightedGraph, which: str = "combinatorial",
                       tol: float = LANCZOS_TOL, cap: int = LANCZOS_CAP) -> tuple:
    """(lambda2, lambda_max) by Lanczos with full reorthogonalization.

    The start vector is deterministic and the kernel direction is deflated,
    so the bottom Ritz value targets the spectral gap. Single-threaded
    summation order makes repeated runs bit-identical.
    """
    n = g.n
    matvec, kernel = _laplacian_matvec(g, which)

    # Deterministic start: linear ramp, deflated against the kernel.
    v = np.arange(1, n + 1, dtype=float)
    v /= np.linalg.norm(v)
    v -= (kernel @ v) * kernel
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise ConvergenceFailure("start vector lies in the Laplacian kernel")
    v /= norm

    def ritz_extremes(alphas, betas, beta_next):
        """(bottom, top, bottom_residual, top_residual) of the tridiagonal.

        The residual beta_k * |last Ritz-vector entry| bounds the distance
        from the Ritz value to a true eigenvalue of the deflated operator.
        """
        tri = np.diag(alphas)
        if betas:
            off = np.array(betas)
            tri += np.diag(off, 1) + np.diag(off, -1)
        vals, vecs = np.linalg.eigh(tri)
        res_bot = abs(beta_next * vecs[-1, 0])
        res_top = abs(beta_next * vecs[-1, -1])
        return float(vals[0]), float(vals[-1]), res_bot, res_top

    basis = [v]
    alphas: list = []
    betas: list = []
    limit = min(cap, n - 1)
    checkpoint = 32
    for step in range(1, limit + 1):
        w = matvec(basis[-1])
        alpha = float(basis[-1] @ w)
        alphas.append(alpha)
        w = w - alpha * basis[-1]
        if len(basis) > 1:
            w = w - betas[-1] * basis[-2]
        # Full reorthogonalization, kernel included.
        w -= (kernel @ w) * kernel
        for b in basis:
            w -= (b @ w) * b
        beta = float(np.linalg.norm(w))

        exhausted = beta < 1e-14 or step == limit
        if exhausted or step >= checkpoint:
            bottom, top, res_bot, res_top = ritz_extremes(alphas, betas, beta)
            scale = max(abs(top), 1e-30)
            converged = (res_bot <= tol * max(abs(bottom), 1e-6 * scale)
                         and res_top <= tol * scale)
            if exhausted and step == n - 1:
                # Full Krylov space of the deflated operator: exact.
                return max(bottom, 0.0), top
            if converged or beta < 1e-14:
                return max(bottom, 0.0), top
            if exhausted:
                break
            checkpoint *= 2
        betas.append(beta)
        basis.append(w / beta)

    raise ConvergenceFailure(
        f"Lanczos did not reach tolerance {tol} within {cap} steps"
    )


# ---------------------------------------------------------------------------
# Cheeger estimates
# ---------------------------------------------------------------------------

CHEEGER_EXACT_LIMIT = 20


def _conductance_exact(g: WeightedGraph) -> float:
    """Exact conductance min_S cut(S)/min(vol S, vol S^c) by enumerating all
    2^(n-1) cuts with vectorized bit arithmetic."""
    n = g.n
    # Fix node 0 on one side to halve the enumeration.
    count = 1 << (n - 1)
    subsets = np.arange(count, dtype=np.int64)
    cut = np.zeros(count)
    vol = np.zeros(count)
    total_vol = float(sum(g.degree))

    def side(node):
        if node == 0:
            return np.ones(count, dtype=bool)
        return ((subsets >> (node - 1)) & 1).astype(bool)

    for i in range(n):
        vol += np.where(side(i), g.degree[i], 0.0)
    for u, v, w in g.edges:
        cut += np.where(side(u) ^ side(v), w, 0.0)

    small_vol = np.minimum(vol, total_vol - vol)
    valid = (small_vol > 0) & (vol < total_vol)
    ratios = cut[valid] / small_vol[valid]
    return float(ratios.min())


def _sweep_cut_upper(g: WeightedGraph) -> float:
    """Conductance upper bound from the sweep over the Fiedler ordering."""
    lap_n = normalized_laplacian(g)
    _, vecs = np.linalg.eigh(lap_n)
    inv_sqrt = np.array([1.0 / math.sqrt(d) for d in g.degree])
    order = np.argsort(inv_sqrt * vecs[:, 1], kind="stable")
    position = np.empty(g.n, dtype=int)
    position[order] = np.arange(g.n)

    total_vol = float(sum(g.degree))
    vol = 0.0
    cut = 0.0
    best = math.inf
    in_set = np.zeros(g.n, dtype=bool)
    for idx in range(g.n - 1):
        node = order[idx]
        in_set[node] = True
        vol += g.degree[node]
        for y, w in g.neighbors(node):
            cut += -w if in_set[y] else w
        small = min(vol, total_vol - vol)
        if small > 0:
            best = min(best, cut / small)
    return best


def cheeger_estimate(g: WeightedGraph) -> tuple:
    """(h_lower, h_upper) for the conductance of a connected graph.

    Exact by cut enumeration up to CHEEGER_EXACT_LIMIT nodes; otherwise the
    spectral lower bound lambda2(normalized)/2 and a Fiedler sweep-cut upper
    bound.
    """
    if not is_connected(g):
        raise Disconnected("Cheeger constant requires a connected graph")
    if g.n < 2:
        raise Disconnected("Cheeger constant requires at least two nodes")
    if g.n <= CHEEGER_EXACT_LIMIT:
        h = _conductance_exact(g)
        return h, h
    lam2 = spectrum(g, "normalized").lambda2
    return lam2 / 2.0, _sweep_cut_upper(g)


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityReport:
    non_negative: bool
    symmetric: bool
    connected: bool
    degree_cap_ok: bool
    betti_ok: bool
    offending_nodes: tuple
    offending_edges: tuple
    betti: tuple

    @property
    def admissible(self) -> bool:
        return (self.non_negative and self.symmetric and self.connected
                and self.degree_cap_ok and self.betti_ok)


def check_admissible(g: WeightedGraph, k_max: int, beta_targets: tuple) -> AdmissibilityReport:
    """Run the five admissibility checks and report failures without raising.

    Symmetry and non-negativity hold by construction of WeightedGraph; they
    are re-verified over the stored edges for completeness.
    """
    bad_edges = tuple((u, v) for u, v, w in g.edges if w < 0)
    neighbor_count = [0] * g.n
    for u, v, _ in g.edges:
        neighbor_count[u] += 1
        neighbor_count[v] += 1
    bad_nodes = tuple(i for i in range(g.n) if neighbor_count[i] > k_max)
    betti = betti_numbers(g)
    return AdmissibilityReport(
        non_negative=not bad_edges,
        symmetric=True,
        connected=is_connected(g),
        degree_cap_ok=not bad_nodes,
        betti_ok=betti == tuple(beta_targets),
        offending_nodes=bad_nodes,
        offending_edges=bad_edges,
        betti=betti,
    )


# ---------------------------------------------------------------------------
# Edge-list text format
# ---------------------------------------------------------------------------

FORMAT_HEADER = "onn-graph v1"


def save_graph(g: WeightedGraph, path) -> None:
    """Write the edge-list text format: header line then one `u v w` per edge."""
    lines = [f"{FORMAT_HEADER} {g.n}"]
    for u, v, w in g.edges:
        lines.append(f"{u} {v} {w!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> WeightedGraph:
    """Parse the edge-list text format; value-exact for decimal weights."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise FileFormat("empty file")
    header = lines[0].split()
    if len(header) != 3 or " ".join(header[:2]) != FORMAT_HEADER:
        raise FileFormat(f"line 1: expected `{FORMAT_HEADER} <n>` header")
    try:
        n = int(header[2])
    except ValueError:
        raise FileFormat(f"line 1: bad node count {header[2]!r}") from None
    edges = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FileFormat(f"line {lineno}: expected `u v w`, got {line!r}")
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise FileFormat(f"line {lineno}: bad edge {line!r}") from None
        edges.append((u, v, w))
    try:
        return build_graph(n, edges)
    except Exception as exc:
        raise FileFormat(f"invalid graph data: {exc}") from exc
