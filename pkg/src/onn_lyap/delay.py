"""Delay-differential simulation of the semantic flow with explicit margin
formulas, empirical stability thresholds, and disturbance (ISS) runs.

The integrator is explicit Euler with linear interpolation into a ring
buffer of past states. The closed-form margin tau_max(mu, L) and the
delay-degraded rate are evaluated from the combinatorial-Laplacian
constants of the same graph, matching the certificate convention.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParams, NoBracket
from .graph_core import WeightedGraph, laplacian, spectrum
from .loss import SemanticState

DIVERGENCE_FACTOR = 1e6


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def _check_params(mu: float, L: float) -> None:
    if not (mu > 0.0 and L > 0.0 and mu <= L):
        raise InvalidParams(f"need 0 < mu <= L, got mu={mu}, L={L}")


def tau_max(mu: float, L: float) -> float:
    """Delay margin 1 / (L * sqrt(1 + 2 mu / L)), in seconds."""
    _check_params(mu, L)
    return 1.0 / (L * math.sqrt(1.0 + 2.0 * mu / L))


def degraded_rate(mu: float, L: float, tau: float) -> float:
    """Delay-degraded convergence rate mu * (1 - L tau / sqrt(2 mu / L)).

    Equals mu at tau = 0 and crosses zero at zero_rate_tau(mu, L).
    """
    _check_params(mu, L)
    if tau < 0.0:
        raise InvalidParams(f"tau must be >= 0, got {tau}")
    return mu * (1.0 - L * tau / math.sqrt(2.0 * mu / L))


def zero_rate_tau(mu: float, L: float) -> float:
    """Delay at which the degraded rate crosses zero (diagnostic)."""
    _check_params(mu, L)
    return math.sqrt(2.0 * mu / L) / L


# ---------------------------------------------------------------------------
# Configuration and history
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayConfig:
    """Integration parameters for the delayed flow.

    dt must resolve the delay (dt <= tau/10 when tau > 0); horizon shorter
    than 20/mu is allowed but recorded as a warning in the output.
    """
    tau: float
    dt: float
    horizon: float
    disturbance_bound: float = 0.0
    disturbance_kind: str = "none"
    disturbance_freq: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.tau < 0.0:
            raise InvalidParams(f"tau must be >= 0, got {self.tau}")
        if self.dt <= 0.0:
            raise InvalidParams(f"dt must be positive, got {self.dt}")
        if self.horizon <= 0.0:
            raise InvalidParams(f"horizon must be positive, got {self.horizon}")
        if self.tau > 0.0 and self.dt > self.tau / 10.0 + 1e-15:
            raise InvalidParams(
                f"dt={self.dt} does not resolve tau={self.tau} (need dt <= tau/10)")
        if self.disturbance_bound < 0.0:
            raise InvalidParams("disturbance bound must be >= 0")
        if self.disturbance_kind not in ("none", "constant", "sinusoid", "seeded-uniform"):
            raise InvalidParams(f"unknown disturbance kind {self.disturbance_kind!r}")


class HistoryBuffer:
    """Ring of equally spaced (time, state) samples spanning [t - tau, t].

    Lookup at t - tau interpolates linearly between the bracketing samples.
    Before warm-up the buffer is padded with the constant initial history.
    """

    def __init__(self, initial: np.ndarray, tau: float, dt: float):
        self.dt = dt
        self.delay_steps = tau / dt if tau > 0 else 0.0
        capacity = int(math.ceil(self.delay_steps)) + 2
        self.ring = deque(maxlen=capacity)
        self.ring.append(initial.copy())

    def push(self, state: np.ndarray) -> None:
        self.ring.append(state)

    def delayed(self) -> np.ndarray:
        """State at (current time - tau), linearly interpolated."""
        if self.delay_steps == 0.0:
            return self.ring[-1]
        lower = int(math.floor(self.delay_steps))
        frac = self.delay_steps - lower
        # ring[-1] is the current state; index back lower and lower+1 steps,
        # clamping to the constant pre-history at the start of the run.
        idx_hi = max(len(self.ring) - 1 - lower, 0)
        idx_lo = max(len(self.ring) - 2 - lower, 0)
        if frac == 0.0:
            return self.ring[idx_hi]
        return (1.0 - frac) * self.ring[idx_hi] + frac * self.ring[idx_lo]


@dataclass
class DelayedTrajectory:
    times: np.ndarray
    v_values: np.ndarray
    consensus_errors: np.ndarray
    disturbance_norms: np.ndarray
    stable: bool
    warnings: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "V", "consensus_error", "disturbance_norm"])
            for i in range(len(self.times)):
                writer.writerow([
                    repr(float(self.times[i])), repr(float(self.v_values[i])),
                    repr(float(self.consensus_errors[i])),
                    repr(float(self.disturbance_norms[i])),
                ])


def _disturbance_stream(shape, cfg: DelayConfig, steps: int):
    """Per-step disturbance matrices with Frobenius norm <= the bound."""
    W = cfg.disturbance_bound
    if cfg.disturbance_kind == "none" or W == 0.0:
        zero = np.zeros(shape)
        for _ in range(steps):
            yield zero
        return
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    direction = rng.standard_normal(shape)
    direction /= np.linalg.norm(direction)
    if cfg.disturbance_kind == "constant":
        w = W * direction
        for _ in range(steps):
            yield w
    elif cfg.disturbance_kind == "sinusoid":
        for k in range(steps):
            yield W * math.sin(cfg.disturbance_freq * k * cfg.dt) * direction
    else:  # seeded-uniform
        for _ in range(steps):
            w = rng.uniform(-1.0, 1.0, size=shape)
            norm = np.linalg.norm(w)
            yield (W / norm) * w if norm > 0 else w


def dde_run(initial: SemanticState, g: WeightedGraph, l1, cfg: DelayConfig) -> DelayedTrajectory:
    """Integrate dS/dt = -(L_G + 2 L1) S(t - tau) + w(t) by explicit Euler.

    The initial history is constant on [-tau, 0]. V(t) is the S-dependent
    part of the loss (consensus plus connection; topology terms are constant
    while the graph is fixed). The run truncates and is flagged unstable when
    V exceeds 1e6 times its initial value or stops being finite.
    """
    matrix = laplacian(g)
    if l1 is not None:
        matrix = matrix + 2.0 * np.asarray(l1, dtype=float)
    lam_step = float(np.linalg.eigvalsh(matrix)[-1]) if g.n > 1 else float(matrix[0, 0])
    warnings = []
    if lam_step > 0 and cfg.dt > 0.1 / lam_step + 1e-15:
        raise InvalidParams(
            f"dt={cfg.dt} too coarse for smoothness {lam_step:.3g} (need dt <= {0.1 / lam_step:.3g})")

    lap = laplacian(g)

    def v_of(values):
        v = 0.5 * float(np.sum(values * (lap @ values)))
        if l1 is not None:
            v += float(np.sum(values * (np.asarray(l1) @ values)))
        return v

    def consensus_error(values):
        return float(np.linalg.norm(values - values.mean(axis=0, keepdims=True)))

    steps = int(round(cfg.horizon / cfg.dt))
    values = initial.values.copy()
    history = HistoryBuffer(values, cfg.tau, cfg.dt)

    times = [0.0]
    v_values = [v_of(values)]
    errors = [consensus_error(values)]
    dist_norms = [0.0]
    # Small floor keeps a start at (or near) consensus from tripping the
    # divergence flag on bounded disturbance response.
    v0 = max(v_values[0], 1e-9)
    stable = True

    for k, w in enumerate(_disturbance_stream(values.shape, cfg, steps)):
        delayed = history.delayed()
        values = values - cfg.dt * (matrix @ delayed) + cfg.dt * w
        history.push(values)
        t = (k + 1) * cfg.dt
        v = v_of(values)
        times.append(t)
        v_values.append(v)
        errors.append(consensus_error(values))
        dist_norms.append(float(np.linalg.norm(w)))
        if not math.isfinite(v) or v > DIVERGENCE_FACTOR * v0:
            stable = False
            break

    spec = spectrum(g, "combinatorial") if g.n >= 2 else None
    if spec is not None and spec.lambda2 > 0:
        recommended = 20.0 / spec.lambda2
        if cfg.horizon < recommended:
            warnings.append(
                f"horizon {cfg.horizon} below recommended {recommended:.3g} (20/mu)")

    return DelayedTrajectory(
        times=np.array(times),
        v_values=np.array(v_values),
        consensus_errors=np.array(errors),
        disturbance_norms=np.array(dist_norms),
        stable=stable,
        warnings=warnings,
    )


def fit_decay_rate(traj: DelayedTrajectory, discard_fraction: float = 0.1) -> float:
    """Continuous-time decay rate of sqrt(V): slope of ln V over the trailing
    part of the run, divided by two. Positive for decay."""
    start = int(len(traj.times) * discard_fraction)
    v = traj.v_values[start:]
    t = traj.times[start:]
    positive = v > 0
    v, t = v[positive], t[positive]
    if len(v) < 2:
        raise InvalidParams("not enough positive samples to fit a rate")
    slope = np.polyfit(t, np.log(v), 1)[0]
    return -0.5 * float(slope)


def find_tau_star(initial: SemanticState, g: WeightedGraph, l1,
                  cfg: DelayConfig, tau_low: float, tau_high: float,
                  tol: float = 1e-2) -> float:
    """Empirical stability threshold by bisection on the dde_run verdict.

    Requires a bracket: stable at tau_low, unstable at tau_high. The returned
    threshold is deterministic for a given configuration seed.
    """
    def verdict(tau):
        probe = DelayConfig(
            tau=tau, dt=cfg.dt, horizon=cfg.horizon,
            disturbance_bound=cfg.disturbance_bound,
            disturbance_kind=cfg.disturbance_kind,
            disturbance_freq=cfg.disturbance_freq, seed=cfg.seed,
        )
        return dde_run(initial, g, l1, probe).stable

    if not verdict(tau_low):
        raise NoBracket(f"system already unstable at tau={tau_low}")
    if verdict(tau_high):
        raise NoBracket(f"system still stable at tau={tau_high}")
    lo, hi = tau_low, tau_high
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if verdict(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def iss_run(initial: SemanticState, g: WeightedGraph, l1, cfg: DelayConfig) -> tuple:
    """Disturbance run returning (steady_error, bound).

    steady_error is the maximum consensus error over the final 10% of the
    horizon; bound is W / mu_tilde with mu and L taken from the graph's
    combinatorial Laplacian.
    """
    if cfg.disturbance_bound <= 0.0:
        raise InvalidParams("iss_run requires a positive disturbance bound")
    spec = spectrum(g, "combinatorial")
    mu, L = spec.lambda2, spec.lambda_max
    margin = tau_max(mu, L)
    if cfg.tau >= margin:
        raise InvalidParams(f"tau={cfg.tau} is not below the margin {margin:.4g}")
    mu_tilde = degraded_rate(mu, L, cfg.tau)
    traj = dde_run(initial, g, l1, cfg)
    start = int(len(traj.times) * 0.9)
    steady_error = float(np.max(traj.consensus_errors[start:]))
    return steady_error, cfg.disturbance_bound / mu_tilde
