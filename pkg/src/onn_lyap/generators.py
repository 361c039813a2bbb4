"""Deterministic synthetic-graph and initial-state factories.

Every factory is a pure function of its GenSpec: the same spec yields the
same graph bit-for-bit. Random kinds resample on connectivity failure up to
a retry cap. Community graphs place nodes in contiguous blocks, build a ring
lattice of degree `k` inside each block, and join blocks by a seeded random
spanning tree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpec, InvalidDimension, RetryExhausted
from .graph_core import UnionFind, WeightedGraph, build_graph, is_connected
from .loss import SemanticState

RETRY_CAP = 10_000


@dataclass(frozen=True)
class GenSpec:
    kind: str
    n: int
    k: int = 2
    communities: int = 1
    seed: int = 0
    weight_law: tuple = ("unit",)

    def __post_init__(self):
        if self.n < 1:
            raise InfeasibleSpec(f"n must be positive, got {self.n}")
        law = self.weight_law
        if law[0] not in ("unit", "uniform"):
            raise InfeasibleSpec(f"unknown weight law {law!r}")
        if law[0] == "uniform" and (len(law) != 3 or not 0 <= law[1] <= law[2]):
            raise InfeasibleSpec(f"uniform law needs (uniform, a, b) with 0 <= a <= b, got {law!r}")


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed, stream)))


def _apply_weights(n, pairs, spec: GenSpec) -> WeightedGraph:
    law = spec.weight_law
    pairs = sorted((min(u, v), max(u, v)) for u, v in pairs)
    if law[0] == "unit":
        return build_graph(n, [(u, v, 1.0) for u, v in pairs])
    rng = _rng(spec.seed, stream=1)
    weights = rng.uniform(law[1], law[2], size=len(pairs))
    return build_graph(n, [(u, v, float(w)) for (u, v), w in zip(pairs, weights)])


# ---------------------------------------------------------------------------
# Edge-set builders per kind
# ---------------------------------------------------------------------------

def _path_pairs(n):
    return [(i, i + 1) for i in range(n - 1)]


def _cycle_pairs(n):
    if n < 3:
        raise InfeasibleSpec("cycle needs n >= 3")
    return [(i, (i + 1) % n) for i in range(n)]


def _star_pairs(n):
    return [(0, i) for i in range(1, n)]


def _complete_pairs(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _k_regular_pairs(n, k, seed):
    """Pairing-model k-regular graph, rejecting multi-edges, self-loops, and
    disconnected outcomes."""
    if k < 1 or k >= n:
        raise InfeasibleSpec(f"k-regular needs 1 <= k < n, got k={k}, n={n}")
    if (n * k) % 2 != 0:
        raise InfeasibleSpec(f"k-regular needs even n*k, got n={n}, k={k}")
    rng = _rng(seed, stream=2)
    stubs = np.repeat(np.arange(n), k)
    for _ in range(RETRY_CAP):
        # Shuffle the stub list, then pair each leading stub with the first
        # compatible later stub (no self-loop, no repeated pair).
        remaining = [int(x) for x in rng.permutation(stubs)]
        pairs = set()
        ok = True
        while remaining:
            u = remaining.pop()
            for idx in range(len(remaining) - 1, -1, -1):
                v = remaining[idx]
                key = (min(u, v), max(u, v))
                if u != v and key not in pairs:
                    pairs.add(key)
                    remaining.pop(idx)
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        uf = UnionFind(n)
        for u, v in pairs:
            uf.union(u, v)
        if uf.components == 1:
            return sorted(pairs)
    raise RetryExhausted(f"no connected {k}-regular graph on {n} nodes after {RETRY_CAP} tries")


def _ring_lattice_pairs(nodes, k):
    """Circulant lattice on the given node list: each node links to the k/2
    nearest neighbors on each side. k must be even and below len(nodes)."""
    m = len(nodes)
    if k % 2 != 0 or k >= m:
        raise InfeasibleSpec(f"ring lattice needs even k < community size, got k={k}, size={m}")
    pairs = set()
    for i in range(m):
        for step in range(1, k // 2 + 1):
            j = (i + step) % m
            pairs.add((min(nodes[i], nodes[j]), max(nodes[i], nodes[j])))
    return pairs


def _community_pairs(n, communities, k, seed):
    """Contiguous blocks with intra-block ring lattices of degree k, joined by
    a seeded random spanning tree over the blocks.

    Inter-community edges always land on each block's port node (its first
    node), so the tree backbone never threads through block interiors and the
    spectral gap stays decoupled from the intra-block degree k.
    """
    if communities < 1 or n % communities != 0:
        raise InfeasibleSpec(
            f"communities must divide n, got n={n}, communities={communities}")
    size = n // communities
    if size < 3:
        raise InfeasibleSpec(f"community size must be >= 3, got {size}")
    pairs = set()
    blocks = [list(range(c * size, (c + 1) * size)) for c in range(communities)]
    for block in blocks:
        pairs |= _ring_lattice_pairs(block, k)

    rng = _rng(seed, stream=3)
    order = rng.permutation(communities)
    for idx in range(1, communities):
        a = int(order[idx])
        b = int(order[int(rng.integers(0, idx))])
        pairs.add((min(a, b) * size, max(a, b) * size))
    return sorted(pairs)


def _geometric_pairs(n, k, seed):
    """Random geometric graph in the unit square with radius chosen to hit
    mean degree k, plus a Euclidean minimum-spanning-tree overlay so the
    result is always connected."""
    rng = _rng(seed, stream=4)
    points = rng.uniform(0.0, 1.0, size=(n, 2))
    radius = math.sqrt(max(k, 1) / (n * math.pi))
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    pairs = {(i, j) for i in range(n) for j in range(i + 1, n) if dist[i, j] <= radius}

    # Prim's algorithm over Euclidean distances.
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(n, dtype=int)
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        in_tree[j] = True
        pairs.add((min(parent[j], j), max(parent[j], j)))
        closer = dist[j] < best
        best = np.where(closer, dist[j], best)
        parent = np.where(closer, j, parent)
    return sorted(pairs)


def generate(spec: GenSpec) -> WeightedGraph:
    """Build the requested graph family; always connected."""
    n = spec.n
    if spec.kind == "path":
        pairs = _path_pairs(n)
    elif spec.kind == "cycle":
        pairs = _cycle_pairs(n)
    elif spec.kind == "star":
        pairs = _star_pairs(n)
    elif spec.kind == "complete":
        pairs = _complete_pairs(n)
    elif spec.kind == "k_regular":
        pairs = _k_regular_pairs(n, spec.k, spec.seed)
    elif spec.kind == "community":
        pairs = _community_pairs(n, spec.communities, spec.k, spec.seed)
    elif spec.kind == "random_geometric":
        pairs = _geometric_pairs(n, spec.k, spec.seed)
    else:
        raise InfeasibleSpec(f"unknown graph kind {spec.kind!r}")
    g = _apply_weights(n, pairs, spec)
    if not is_connected(g):
        raise RetryExhausted(f"generated {spec.kind} graph is disconnected")
    return g


def init_state(n: int, d: int, law: str, seed: int, communities: int = 1) -> SemanticState:
    """Seeded initial embeddings.

    gaussian draws every entry from N(0, 1). cluster_centroids assigns each
    contiguous community block the same seeded centroid row (zero in-block
    noise), matching the community generator's node layout.
    """
    if n < 1 or d < 1:
        raise InvalidDimension(f"need positive n and d, got n={n}, d={d}")
    rng = _rng(seed, stream=5)
    if law == "gaussian":
        return SemanticState(values=rng.standard_normal((n, d)))
    if law == "cluster_centroids":
        if communities < 1 or n % communities != 0:
            raise InvalidDimension(
                f"communities must divide n, got n={n}, communities={communities}")
        size = n // communities
        centroids = rng.standard_normal((communities, d))
        return SemanticState(values=np.repeat(centroids, size, axis=0))
    raise InvalidDimension(f"unknown init law {law!r}")
