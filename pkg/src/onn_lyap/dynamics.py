"""Hybrid iteration: gradient descent on the semantic state alternating with
stochastic topology surgery, plus rate fitting and surgery monitors.

One iteration is a semantic Euler step followed by an independent seeded coin
that triggers the configured surgery operator. Rewire and ricci-flow surgery
are gated so connectivity and both Betti numbers are preserved at every
committed change; decay surgery preserves them by uniform scaling.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curvature import ricci_threshold_edges
from .errors import (
    NonPositiveLoss,
    NoSurgeryEvents,
    ZeroDenominator,
)
from .graph_core import UnionFind, WeightedGraph, laplacian, replace_edges, spectrum
from .homology import BettiPair, betti, homology_loss
from .loss import LossConfig, SemanticState

CSV_HEADER = [
    "iter", "loss_total", "loss_consensus", "loss_ricci", "loss_homology",
    "beta0", "beta1", "lambda2", "surgery", "swaps", "xi_running",
]


@dataclass(frozen=True)
class OnnState:
    """Hybrid state: embeddings, topology, and the iteration counter."""
    s: SemanticState
    g: WeightedGraph
    iteration: int = 0


@dataclass(frozen=True)
class SurgeryConfig:
    """Parameters of the surgery operator.

    mode: decay, rewire, or ricci_flow. p is the per-iteration application
    probability. delta is the weight-decay factor (decay) or the swap-budget
    fraction of the edge count (rewire). theta is the cycle-loss trigger for
    decay mode. k_target is the degree target for ricci_flow mode. Fields
    irrelevant to the mode are ignored.
    """
    mode: str = "rewire"
    p: float = 0.0
    delta: float = 0.1
    theta: float = 0.0
    k_target: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0,1], got {self.p}")
        if self.mode == "decay" and not 0.0 <= self.delta < 1.0:
            raise ValueError(f"decay delta must be in [0,1), got {self.delta}")
        if self.mode == "rewire" and not 0.0 < self.delta <= 1.0:
            raise ValueError(f"rewire delta must be in (0,1], got {self.delta}")
        if self.theta < 0.0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.mode not in ("decay", "rewire", "ricci_flow"):
            raise ValueError(f"unknown surgery mode {self.mode!r}")


@dataclass(frozen=True)
class RunConfig:
    iterations: int
    eta: object = "auto"          # "auto" = 1/(L + ||L1||), or a float
    spectral_every: int = 25
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    surgery: SurgeryConfig = field(default_factory=SurgeryConfig)
    debug_checks: bool = False    # assert monotone descent of semantic steps


@dataclass(frozen=True)
class TrajectoryRow:
    iteration: int
    total: float
    consensus: float
    connection: float
    ricci: float
    homology: float
    beta0: int
    beta1: int
    lambda2: float
    surgery: bool
    swaps: int
    xi_running: float


@dataclass(frozen=True)
class SurgeryEvent:
    iteration: int
    swaps: int
    delta_topo: float     # topology-loss improvement (before - after)
    delta_consensus: float  # |consensus change| at fixed S


@dataclass
class TrajectoryRecord:
    rows: list
    events: list
    final_state: OnnState
    wall_time: float
    config_seed: int

    def losses(self) -> np.ndarray:
        return np.array([r.total for r in self.rows])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in self.rows:
                writer.writerow([
                    r.iteration, repr(r.total), repr(r.consensus),
                    repr(r.ricci), repr(r.homology), r.beta0, r.beta1,
                    repr(r.lambda2), int(r.surgery), r.swaps,
                    repr(r.xi_running),
                ])

    def summary(self) -> dict:
        out = {
            "iterations": self.rows[-1].iteration,
            "final_total": self.rows[-1].total,
            "beta0_constant": len({r.beta0 for r in self.rows}) == 1,
            "beta1_constant": len({r.beta1 for r in self.rows}) == 1,
            "surgery_events": len(self.events),
            "total_swaps": sum(e.swaps for e in self.events),
            "wall_time_s": self.wall_time,
        }
        try:
            mu, r2 = fit_rate(self)
            out["mu_emp"] = mu
            out["r_squared"] = r2
        except NonPositiveLoss:
            out["mu_emp"] = None
            out["r_squared"] = None
        try:
            out["xi"] = surgery_efficiency(self)
        except (NoSurgeryEvents, ZeroDenominator):
            out["xi"] = None
        return out

    def summary_json(self, path) -> None:
        data = self.summary()
        data.pop("wall_time_s", None)  # kept out of byte-compared artifacts
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Semantic step
# ---------------------------------------------------------------------------

def semantic_step(state: OnnState, eta: float, l1=None) -> OnnState:
    """One Euler step s <- s - eta * (L_G + 2 L1) s; the topology is unchanged.

    With eta <= 1/(lambda_max + ||L1||) the total loss is non-increasing.
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    matrix = laplacian(state.g)
    if l1 is not None:
        matrix = matrix + 2.0 * np.asarray(l1, dtype=float)
    new_values = state.s.values - eta * (matrix @ state.s.values)
    return OnnState(
        s=SemanticState(values=new_values),
        g=state.g,
        iteration=state.iteration + 1,
    )


def power_lambda_max(matrix: np.ndarray, tol: float = 1e-12, cap: int = 20000) -> float:
    """Dominant eigenvalue of a symmetric PSD matrix by power iteration with a
    deterministic ramp start."""
    n = matrix.shape[0]
    if n == 1:
        return float(matrix[0, 0])
    v = np.arange(1, n + 1, dtype=float)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(cap):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_lam = float(v @ (matrix @ v))
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1e-30):
            return new_lam
        lam = new_lam
    return lam


# ---------------------------------------------------------------------------
# Fast edge-array evaluation (internal)
# ---------------------------------------------------------------------------

class _EdgeView:
    """Mutable numpy view of an edge list for fast curvature evaluation.

    Candidate swaps are scored here without constructing graph objects; a
    WeightedGraph is rebuilt only when a swap commits.
    """

    __slots__ = ("n", "us", "vs", "ws", "deg")

    def __init__(self, n, us, vs, ws):
        self.n = n
        self.us = us
        self.vs = vs
        self.ws = ws
        self.deg = np.zeros(n)
        np.add.at(self.deg, us, ws)
        np.add.at(self.deg, vs, ws)

    @classmethod
    def from_graph(cls, g: WeightedGraph) -> "_EdgeView":
        us = np.array([e[0] for e in g.edges], dtype=np.intp)
        vs = np.array([e[1] for e in g.edges], dtype=np.intp)
        ws = np.array([e[2] for e in g.edges])
        return cls(g.n, us, vs, ws)

    def kappa(self) -> np.ndarray:
        """Per-edge curvature, aligned with (us, vs, ws)."""
        inv = np.zeros(self.n)
        positive = self.deg > 0
        inv[positive] = 1.0 / np.sqrt(self.deg[positive])
        nbr = np.zeros(self.n)
        np.add.at(nbr, self.us, self.ws * inv[self.vs])
        np.add.at(nbr, self.vs, self.ws * inv[self.us])
        side_u = nbr[self.us] - self.ws * inv[self.vs]
        side_v = nbr[self.vs] - self.ws * inv[self.us]
        return self.ws * (inv[self.us] + inv[self.vs]) - side_u - side_v

    def ricci(self, loss_cfg: LossConfig) -> float:
        kap = self.kappa()
        if loss_cfg.ricci_variant == "hinge_zero":
            base = float(np.maximum(0.0, -kap).sum())
        else:
            hinge = np.maximum(0.0, loss_cfg.kappa_min - kap)
            base = float((hinge * hinge).sum())
        value = loss_cfg.lambda_ricci * base
        if loss_cfg.lambda_curv != 0.0:
            sq = 2.0 * float((kap * kap).sum())
            mean_hinge = float(np.maximum(0.0, loss_cfg.kappa_min - kap).mean()) \
                if kap.size else 0.0
            value += loss_cfg.lambda_curv * (sq + loss_cfg.rho_curv * mean_hinge)
        return value

    def swapped(self, index: int, add_u: int, add_v: int) -> "_EdgeView":
        us = self.us.copy()
        vs = self.vs.copy()
        ws = self.ws.copy()
        us[index], vs[index], ws[index] = add_u, add_v, 1.0
        return _EdgeView(self.n, us, vs, ws)

    def to_graph(self) -> WeightedGraph:
        from .graph_core import build_graph
        return build_graph(self.n, [
            (int(u), int(v), float(w))
            for u, v, w in zip(self.us, self.vs, self.ws)
        ])


def _view_bridges(view: _EdgeView) -> set:
    """Bridge edges of the view, as (min, max) pairs."""
    adjacency = [[] for _ in range(view.n)]
    for u, v in zip(view.us, view.vs):
        adjacency[int(u)].append(int(v))
        adjacency[int(v)].append(int(u))
    disc = [-1] * view.n
    low = [0] * view.n
    bridges = set()
    timer = 0
    for root in range(view.n):
        if disc[root] >= 0:
            continue
        stack = [(root, -1, iter(adjacency[root]))]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            node, parent, it = stack[-1]
            advanced = False
            for child in it:
                if child == parent:
                    continue
                if disc[child] < 0:
                    disc[child] = low[child] = timer
                    timer += 1
                    stack.append((child, node, iter(adjacency[child])))
                    advanced = True
                    break
                low[node] = min(low[node], disc[child])
            if not advanced:
                stack.pop()
                if stack:
                    pnode = stack[-1][0]
                    low[pnode] = min(low[pnode], low[node])
                    if low[node] > disc[pnode]:
                        bridges.add((min(pnode, node), max(pnode, node)))
    return bridges


def _view_closest_pairs(values: np.ndarray, view: _EdgeView, pool: int = 32) -> list:
    """The `pool` semantically closest non-adjacent pairs, ties (u, v) first."""
    sq = np.sum(values * values, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (values @ values.T)
    n = view.n
    mask = np.zeros((n, n), dtype=bool)
    mask[np.triu_indices(n, k=1)] = True
    mask[view.us, view.vs] = False
    mask[view.vs, view.us] = False
    cand_u, cand_v = np.nonzero(mask)
    if cand_u.size == 0:
        return []
    dists = d2[cand_u, cand_v]
    take = min(pool, dists.size)
    idx = np.argpartition(dists, take - 1)[:take]
    chosen = sorted(
        (float(dists[i]), int(cand_u[i]), int(cand_v[i])) for i in idx)
    return [(u, v) for _, u, v in chosen]


# Removal candidates examined per swap attempt before giving up.
_REMOVAL_SCAN = 8


def _betti_gate(view: _EdgeView, index: int, add_u: int, add_v: int) -> bool:
    """Re-verify that swapping edge `index` for (add_u, add_v) preserves both
    Betti numbers, by union-find on the hypothetical edge set."""
    uf = UnionFind(view.n)
    before = UnionFind(view.n)
    for i in range(len(view.us)):
        before.union(int(view.us[i]), int(view.vs[i]))
        if i == index:
            uf.union(add_u, add_v)
        else:
            uf.union(int(view.us[i]), int(view.vs[i]))
    # Edge count is unchanged by a swap, so matching component counts make
    # the Euler identity match beta1 as well.
    return uf.components == before.components


# ---------------------------------------------------------------------------
# Surgery operators
# ---------------------------------------------------------------------------

def surgery_decay(state: OnnState, cfg: SurgeryConfig, loss_cfg: LossConfig) -> OnnState:
    """Multiply every edge weight by (1 - delta) when the cycle loss exceeds
    theta; identity otherwise. Uniform scaling of positive weights leaves both
    Betti numbers unchanged."""
    if homology_loss(state.g, loss_cfg.betti_targets) <= cfg.theta or cfg.delta == 0.0:
        return state
    factor = 1.0 - cfg.delta
    new_g = replace_edges(state.g, [(u, v, w * factor) for u, v, w in state.g.edges])
    return OnnState(s=state.s, g=new_g, iteration=state.iteration)


def _commit_swap(view: _EdgeView, index: int, au: int, av: int) -> _EdgeView:
    swapped = view.swapped(index, min(au, av), max(au, av))
    return _EdgeView(view.n, swapped.us, swapped.vs, swapped.ws)


def surgery_rewire(state: OnnState, cfg: SurgeryConfig,
                   loss_cfg: LossConfig) -> tuple:
    """Greedy curvature-guided edge swaps with a hard Betti gate.

    Each swap removes the most-negative-curvature edge lying on a cycle and
    adds a unit-weight edge between the semantically closest non-adjacent
    pair, taken from the nearest-pair candidate pool. A swap commits only if
    the Betti gate re-verifies and the curvature loss strictly decreases;
    when the best removal admits no committing addition the next-worst edges
    are tried before the attempt is abandoned. Returns (state, committed swap
    count); with no eligible edge the state comes back unchanged with zero
    swaps.
    """
    budget = math.ceil(cfg.delta * state.g.edge_count)
    view = _EdgeView.from_graph(state.g)
    swaps = 0
    for _ in range(budget):
        kap = view.kappa()
        bridge_set = _view_bridges(view)
        order = sorted(
            (float(kap[i]), int(view.us[i]), int(view.vs[i]), i)
            for i in range(kap.size)
            if kap[i] < 0.0 and (int(view.us[i]), int(view.vs[i])) not in bridge_set
        )
        if not order:
            break
        additions = _view_closest_pairs(state.s.values, view)
        if not additions:
            break
        ricci_before = view.ricci(loss_cfg)
        committed = False
        for _, ru, rv, index in order[:_REMOVAL_SCAN]:
            for au, av in additions:
                if (au, av) == (ru, rv):
                    continue
                candidate = _commit_swap(view, index, au, av)
                if not candidate.ricci(loss_cfg) < ricci_before:
                    continue
                if not _betti_gate(view, index, au, av):
                    continue
                view = candidate
                swaps += 1
                committed = True
                break
            if committed:
                break
        if not committed:
            break
    if swaps == 0:
        return state, 0
    return OnnState(s=state.s, g=view.to_graph(), iteration=state.iteration), swaps


def surgery_ricci_flow(state: OnnState, cfg: SurgeryConfig,
                       loss_cfg: LossConfig) -> tuple:
    """Threshold-rule surgery: edges ranked below the curvature threshold for
    the degree target are swapped out, worst first, for unit-weight edges
    between semantically closest pairs. The Betti gate still applies, so the
    homology class never changes. Returns (state, swaps)."""
    keep, _ = ricci_threshold_edges(state.g, cfg.k_target)
    view = _EdgeView.from_graph(state.g)
    kap = view.kappa()
    drop = sorted(
        (float(kap[i]), int(view.us[i]), int(view.vs[i]), i)
        for i in range(kap.size)
        if (int(view.us[i]), int(view.vs[i])) not in keep
    )
    swaps = 0
    for _, ru, rv, index in drop:
        if (int(view.us[index]), int(view.vs[index])) != (ru, rv):
            continue
        additions = _view_closest_pairs(state.s.values, view)
        for au, av in additions:
            if (au, av) == (ru, rv):
                continue
            if not _betti_gate(view, index, au, av):
                continue
            view = _commit_swap(view, index, au, av)
            swaps += 1
            break
    if swaps == 0:
        return state, 0
    return OnnState(s=state.s, g=view.to_graph(), iteration=state.iteration), swaps


def _apply_surgery(state: OnnState, cfg: SurgeryConfig, loss_cfg: LossConfig) -> tuple:
    if cfg.mode == "decay":
        new_state = surgery_decay(state, cfg, loss_cfg)
        changed = new_state.g is not state.g
        return new_state, (1 if changed else 0)
    if cfg.mode == "rewire":
        return surgery_rewire(state, cfg, loss_cfg)
    if cfg.mode == "ricci_flow":
        return surgery_ricci_flow(state, cfg, loss_cfg)
    raise ValueError(f"unknown surgery mode {cfg.mode!r}")


# ---------------------------------------------------------------------------
# The run loop
# ---------------------------------------------------------------------------

def run(initial: OnnState, cfg: RunConfig) -> TrajectoryRecord:
    """Alternating scheme: every iteration takes one semantic step, then with
    probability p applies one surgery call. The surgery coin draws once per
    iteration from a counter-based generator, so identical (config, seed)
    yield bit-identical trajectories.

    Losses are evaluated per iteration from cached dense operators plus the
    vectorized curvature view; the caches refresh whenever a surgery commits.
    """
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    state = initial
    targets = cfg.loss.betti_targets

    l1 = None
    l1_norm = 0.0
    lap = None
    matrix = None
    view = None
    lam_max = 0.0

    def refresh_topology_caches():
        nonlocal l1, l1_norm, lap, matrix, view, lam_max
        l1 = cfg.loss.connection_operator(state.g)
        lap = laplacian(state.g)
        if l1 is not None:
            l1 = np.asarray(l1, dtype=float)
            l1_norm = power_lambda_max(l1)
            matrix = lap + 2.0 * l1
        else:
            l1_norm = 0.0
            matrix = lap
        view = _EdgeView.from_graph(state.g)
        lam_max = power_lambda_max(lap)

    refresh_topology_caches()

    def eta_value():
        if cfg.eta == "auto":
            return 1.0 / (lam_max + l1_norm) if (lam_max + l1_norm) > 0 else 1.0
        return float(cfg.eta)

    eta = eta_value()
    lambda2 = spectrum(state.g, "combinatorial").lambda2 if state.g.n >= 2 else 0.0

    rows = []
    events = []
    xi_topo = []
    xi_cons = []

    def xi_running():
        if not xi_topo:
            return 0.0
        denom = sum(xi_cons) / len(xi_cons)
        if denom == 0.0:
            return 0.0
        return (sum(xi_topo) / len(xi_topo)) / denom

    def fast_consensus(values):
        return 0.5 * float(np.sum(values * (lap @ values)))

    def log_row(surgery_fired: bool, swaps: int) -> float:
        values = state.s.values
        cons = fast_consensus(values)
        conn = float(np.sum(values * (l1 @ values))) if l1 is not None else 0.0
        ricci = view.ricci(cfg.loss)
        b = betti(state.g)
        # Euler identity, re-derived from scratch each iteration.
        assert b.beta1 == state.g.edge_count - state.g.n + b.beta0
        hom = cfg.loss.lambda_homology * float(
            (b.beta0 - targets.beta0) ** 2 + (b.beta1 - targets.beta1) ** 2)
        total = cons + conn + ricci + hom
        rows.append(TrajectoryRow(
            iteration=state.iteration,
            total=total,
            consensus=cons,
            connection=conn,
            ricci=ricci,
            homology=hom,
            beta0=b.beta0,
            beta1=b.beta1,
            lambda2=lambda2,
            surgery=surgery_fired,
            swaps=swaps,
            xi_running=xi_running(),
        ))
        return total

    prev_total = log_row(False, 0)

    for k in range(cfg.iterations):
        new_values = state.s.values - eta * (matrix @ state.s.values)
        state = OnnState(
            s=SemanticState(values=new_values), g=state.g,
            iteration=state.iteration + 1,
        )

        coin = float(rng.uniform())
        fired = coin < cfg.surgery.p
        swaps = 0
        if fired:
            topo_before = view.ricci(cfg.loss) + cfg.loss.lambda_homology * \
                homology_loss(state.g, targets)
            cons_before = fast_consensus(state.s.values)
            state, swaps = _apply_surgery(state, cfg.surgery, cfg.loss)
            if swaps > 0:
                # Topology changed: refresh cached operators and step size.
                refresh_topology_caches()
                eta = eta_value()
                topo_after = view.ricci(cfg.loss) + cfg.loss.lambda_homology * \
                    homology_loss(state.g, targets)
                cons_after = fast_consensus(state.s.values)
                events.append(SurgeryEvent(
                    iteration=state.iteration,
                    swaps=swaps,
                    delta_topo=topo_before - topo_after,
                    delta_consensus=abs(cons_after - cons_before),
                ))
                xi_topo.append(topo_before - topo_after)
                xi_cons.append(abs(cons_after - cons_before))

        if (k + 1) % cfg.spectral_every == 0 and state.g.n >= 2:
            lambda2 = spectrum(state.g, "combinatorial").lambda2

        total = log_row(fired, swaps)
        if cfg.debug_checks and swaps == 0 and cfg.eta == "auto":
            assert total <= prev_total + 1e-9 * max(1.0, prev_total)
        prev_total = total

    return TrajectoryRecord(
        rows=rows,
        events=events,
        final_state=state,
        wall_time=time.perf_counter() - t0,
        config_seed=cfg.seed,
    )


# ---------------------------------------------------------------------------
# Monitors
# ---------------------------------------------------------------------------

def fit_rate(traj: TrajectoryRecord, window: float = 0.9) -> tuple:
    """Least-squares fit of ln V_k over the trailing `window` fraction of the
    trajectory. Returns (mu_emp, r_squared); mu_emp is positive for decay."""
    values = traj.losses()
    start = int(math.floor(len(values) * (1.0 - window)))
    tail = values[start:]
    ks = np.arange(start, len(values), dtype=float)
    if np.any(tail <= 0.0):
        raise NonPositiveLoss("loss must be strictly positive over the fit window")
    logs = np.log(tail)
    k_mean = ks.mean()
    l_mean = logs.mean()
    denom = float(np.sum((ks - k_mean) ** 2))
    if denom == 0.0:
        return 0.0, 1.0
    slope = float(np.sum((ks - k_mean) * (logs - l_mean))) / denom
    residuals = logs - (l_mean + slope * (ks - k_mean))
    ss_tot = float(np.sum((logs - l_mean) ** 2))
    ss_res = float(np.sum(residuals ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return -slope, r2


def surgery_efficiency(traj: TrajectoryRecord) -> float:
    """Mean topology-loss improvement over surgery events divided by the mean
    absolute consensus-loss change at fixed S."""
    if not traj.events:
        raise NoSurgeryEvents("trajectory has no committed surgery events")
    denom = sum(e.delta_consensus for e in traj.events) / len(traj.events)
    if denom == 0.0:
        raise ZeroDenominator("surgery never perturbed the consensus loss")
    num = sum(e.delta_topo for e in traj.events) / len(traj.events)
    return num / denom


def roa_member(g0: WeightedGraph, targets: BettiPair) -> bool:
    """Basin membership: true iff the Betti pair matches the target pair."""
    return betti(g0).as_tuple() == targets.as_tuple()
