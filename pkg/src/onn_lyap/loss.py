"""Composite Lyapunov candidate: consensus + connection + curvature +
homology losses, the gradient in the semantic state, and the certificate
constants for the explicit class-K-infinity sandwich.

Conventions fixed here and used everywhere downstream:
    consensus(S, G)  = 1/2 tr(S^T L_G S)   (edge-wise sum, fixed order)
    connection(S)    = tr(S^T L1 S)
    grad_S           = (L_G + 2 L1) S
Topology terms do not depend on S and contribute nothing to the gradient.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import curvature_consistency_loss, ricci_loss
from .errors import DimensionMismatch, Disconnected, InvalidDimension, NotPSD
from .graph_core import WeightedGraph, is_connected, laplacian, replace_edges, spectrum
from .homology import BettiPair, homology_loss


@dataclass(frozen=True, eq=False)
class SemanticState:
    """N x d real matrix of node embeddings; row i is the embedding of node i."""
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise InvalidDimension(f"state must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidDimension("state contains NaN or Inf entries")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def semantic_state(values) -> SemanticState:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return SemanticState(values=arr)


@dataclass(frozen=True)
class LossConfig:
    """Selects the curvature variant, term weights, Betti targets, and the
    connection operator.

    l1_mode is one of "zero", "scaled_laplacian" (lambda_conn * L_G), or
    "user" with an explicit PSD matrix.
    """
    ricci_variant: str = "hinge_zero"
    kappa_min: float = 0.0
    lambda_ricci: float = 1.0
    lambda_homology: float = 1.0
    lambda_curv: float = 0.0
    rho_curv: float = 1.0
    betti_targets: BettiPair = field(default_factory=lambda: BettiPair(1, 0))
    l1_mode: str = "zero"
    lambda_conn: float = 0.0
    l1_matrix: np.ndarray = None

    def connection_operator(self, g: WeightedGraph):
        """The PSD operator L1 for this config, or None for the zero operator."""
        if self.l1_mode == "zero":
            return None
        if self.l1_mode == "scaled_laplacian":
            return self.lambda_conn * laplacian(g)
        if self.l1_mode == "user":
            if self.l1_matrix is None:
                raise NotPSD("l1_mode='user' requires l1_matrix")
            return np.asarray(self.l1_matrix, dtype=float)
        raise ValueError(f"unknown l1_mode: {self.l1_mode!r}")


@dataclass(frozen=True)
class LossBreakdown:
    consensus: float
    connection: float
    ricci: float
    homology: float
    total: float

    def to_json(self) -> str:
        return json.dumps({
            "consensus": self.consensus,
            "connection": self.connection,
            "ricci": self.ricci,
            "homology": self.homology,
            "total": self.total,
        })


def consensus_loss(s: SemanticState, g: WeightedGraph) -> float:
    """1/2 sum over edges of w_uv ||S_u - S_v||^2, summed in edge order.

    Equals 1/2 tr(S^T L_G S); zero exactly when rows agree on every connected
    component.
    """
    if s.n != g.n:
        raise DimensionMismatch(f"state has {s.n} rows, graph has {g.n} nodes")
    vals = s.values
    acc = 0.0
    for u, v, w in g.edges:
        diff = vals[u] - vals[v]
        acc += w * float(diff @ diff)
    return 0.5 * acc


def connection_loss(s: SemanticState, l1) -> float:
    """tr(S^T L1 S) for a PSD operator L1 (None means the zero operator)."""
    if l1 is None:
        return 0.0
    l1 = np.asarray(l1, dtype=float)
    if l1.shape != (s.n, s.n):
        raise DimensionMismatch(f"L1 shape {l1.shape} does not match n={s.n}")
    value = float(np.sum(s.values * (l1 @ s.values)))
    if value < -1e-9 * max(1.0, float(np.abs(l1).max())):
        raise NotPSD(f"connection operator produced negative energy {value}")
    return max(value, 0.0)


def topology_loss(g: WeightedGraph, cfg: LossConfig) -> tuple:
    """(weighted ricci-and-curvature term, weighted homology term)."""
    ricci = cfg.lambda_ricci * ricci_loss(g, cfg.ricci_variant, cfg.kappa_min)
    if cfg.lambda_curv != 0.0:
        ricci += cfg.lambda_curv * curvature_consistency_loss(
            g, rho=cfg.rho_curv, kappa_min=cfg.kappa_min)
    homology = cfg.lambda_homology * homology_loss(g, cfg.betti_targets)
    return ricci, homology


def total_loss(s: SemanticState, g: WeightedGraph, cfg: LossConfig) -> LossBreakdown:
    """Component-wise loss breakdown; total is the fixed-order sum
    consensus + connection + ricci + homology."""
    cons = consensus_loss(s, g)
    conn = connection_loss(s, cfg.connection_operator(g))
    ricci, hom = topology_loss(g, cfg)
    return LossBreakdown(
        consensus=cons,
        connection=conn,
        ricci=ricci,
        homology=hom,
        total=cons + conn + ricci + hom,
    )


def grad_s(s: SemanticState, g: WeightedGraph, l1=None) -> np.ndarray:
    """Gradient of the total loss in S: (L_G + 2 L1) S.

    Topology terms are independent of S. The consensus part is accumulated
    edge-wise in the graph's fixed edge order.
    """
    if s.n != g.n:
        raise DimensionMismatch(f"state has {s.n} rows, graph has {g.n} nodes")
    vals = s.values
    grad = np.zeros_like(vals)
    for u, v, w in g.edges:
        diff = w * (vals[u] - vals[v])
        grad[u] += diff
        grad[v] -= diff
    if l1 is not None:
        l1 = np.asarray(l1, dtype=float)
        if l1.shape != (s.n, s.n):
            raise DimensionMismatch(f"L1 shape {l1.shape} does not match n={s.n}")
        grad += 2.0 * (l1 @ vals)
    return grad


# ---------------------------------------------------------------------------
# Certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovCertificate:
    """Constants of the class-K-infinity sandwich around the target pair.

    alpha1(r) = (mu/2) r^2 and alpha2(r) = (L/2) r^2 + c_topo r with
    mu = lambda2 and L = lambda_max of the target combinatorial Laplacian;
    c_topo is a sampled bound on the topology-loss gradient near the target.
    """
    mu: float
    L: float
    c_topo: float
    samples: int
    radius: float
    seed: int

    def alpha1(self, r: float) -> float:
        return 0.5 * self.mu * r * r

    def alpha2(self, r: float) -> float:
        return 0.5 * self.L * r * r + self.c_topo * r

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "L": self.L,
            "c_topo": self.c_topo,
            "samples": self.samples,
            "radius": self.radius,
            "seed": self.seed,
        }


def _topo_value(g: WeightedGraph, cfg: LossConfig) -> float:
    ricci, hom = topology_loss(g, cfg)
    return ricci + hom


def certificate(g_target: WeightedGraph, cfg: LossConfig, samples: int = 16,
                radius: float = 1.0, seed: int = 0) -> LyapunovCertificate:
    """Certificate constants for a connected target graph.

    mu and L are exact Laplacian eigenvalues. c_topo is the maximum, over
    seeded random weight perturbations with Frobenius distance at most
    `radius` from the target, of the finite-difference norm of the topology
    losses with respect to the adjacency matrix.
    """
    if not is_connected(g_target):
        raise Disconnected("certificate requires a connected target")
    spec = spectrum(g_target, "combinatorial")
    mu, lam_max = spec.lambda2, spec.lambda_max

    rng = np.random.Generator(np.random.Philox(key=seed))
    base = np.array([w for _, _, w in g_target.edges])
    pairs = [(u, v) for u, v, _ in g_target.edges]
    h = 1e-5
    c_topo = 0.0
    for _ in range(samples):
        delta = rng.uniform(-1.0, 1.0, size=base.size)
        # Symmetric matrix: each edge contributes twice to ||dA||_F^2.
        norm = math.sqrt(2.0 * float(delta @ delta))
        if norm > 0:
            delta *= (radius * rng.uniform(0.0, 1.0)) / norm
        weights = np.maximum(base + delta, 1e-6)
        grad_sq = 0.0
        for k in range(base.size):
            plus = weights.copy()
            plus[k] += h
            minus = weights.copy()
            minus[k] = max(minus[k] - h, 1e-9)
            g_plus = replace_edges(
                g_target, [(pairs[i][0], pairs[i][1], plus[i]) for i in range(base.size)])
            g_minus = replace_edges(
                g_target, [(pairs[i][0], pairs[i][1], minus[i]) for i in range(base.size)])
            diff = (_topo_value(g_plus, cfg) - _topo_value(g_minus, cfg)) / (plus[k] - minus[k])
            grad_sq += diff * diff
        c_topo = max(c_topo, math.sqrt(2.0 * grad_sq))

    return LyapunovCertificate(
        mu=float(mu), L=float(lam_max), c_topo=float(c_topo),
        samples=samples, radius=radius, seed=seed,
    )
