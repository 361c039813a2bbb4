import itertools
import math

import numpy as np
import pytest

from onn_lyap.curvature import forman_curvature
from onn_lyap.errors import DimensionMismatch, Disconnected, InvalidDimension, NotPSD
from onn_lyap.graph_core import build_graph, laplacian, spectrum
from onn_lyap.homology import BettiPair, betti
from onn_lyap.loss import (
    LossConfig,
    SemanticState,
    certificate,
    connection_loss,
    consensus_loss,
    grad_s,
    semantic_state,
    total_loss,
)
from onn_lyap.generators import GenSpec, generate
from helpers import (
    complete_graph,
    consensus_trace_oracle,
    cycle_graph,
    path_graph,
    random_connected_graph,
    star_graph,
)


class TestConsensusLoss:
    def test_p3_hand_sum(self):
        assert consensus_loss(semantic_state([0.0, 1.0, 2.0]), path_graph(3)) == 1.0

    def test_identical_rows_zero(self):
        rng = np.random.default_rng(5)
        g = random_connected_graph(rng, 8)
        row = rng.standard_normal(3)
        s = SemanticState(values=np.tile(row, (8, 1)))
        assert consensus_loss(s, g) == 0.0

    def test_c4_top_eigenvector(self):
        g = cycle_graph(4)
        s = semantic_state([1.0, -1.0, 1.0, -1.0])
        value = consensus_loss(s, g)
        assert value == pytest.approx(8.0)
        lam_max = spectrum(g).lambda_max
        assert value == pytest.approx(0.5 * lam_max * 4.0)

    def test_two_route_equality(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            n = int(rng.integers(2, 20))
            g = random_connected_graph(rng, n, extra_edges=int(rng.integers(0, 6)))
            s = SemanticState(values=rng.standard_normal((n, int(rng.integers(1, 5)))))
            edge_route = consensus_loss(s, g)
            trace_route = consensus_trace_oracle(s.values, g)
            assert edge_route == pytest.approx(trace_route, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            consensus_loss(semantic_state([0.0, 1.0]), path_graph(3))

    def test_rayleigh_lower_bound(self):
        rng = np.random.default_rng(31)
        for _ in range(15):
            n = int(rng.integers(2, 16))
            g = random_connected_graph(rng, n, extra_edges=int(rng.integers(0, 5)))
            s = SemanticState(values=rng.standard_normal((n, 3)))
            lam2 = spectrum(g).lambda2
            centered = s.values - s.values.mean(axis=0, keepdims=True)
            bound = 0.5 * lam2 * float(np.sum(centered * centered))
            assert consensus_loss(s, g) >= bound - 1e-9


class TestConnectionLoss:
    def test_zero_operator(self):
        s = semantic_state([1.0, 2.0, 3.0])
        assert connection_loss(s, None) == 0.0

    def test_identity_gives_frobenius_norm(self):
        rng = np.random.default_rng(3)
        s = SemanticState(values=rng.standard_normal((4, 2)))
        assert connection_loss(s, np.eye(4)) == pytest.approx(
            float(np.sum(s.values ** 2)))

    def test_p3_laplacian_operator(self):
        s = semantic_state([0.0, 1.0, 2.0])
        assert connection_loss(s, laplacian(path_graph(3))) == pytest.approx(2.0)

    def test_negative_energy_raises(self):
        s = semantic_state([1.0, 1.0])
        with pytest.raises(NotPSD):
            connection_loss(s, -np.eye(2))


class TestTotalLoss:
    def test_equilibrium_is_zero(self):
        g = cycle_graph(4)
        s = SemanticState(values=np.ones((4, 2)))
        cfg = LossConfig(betti_targets=BettiPair(1, 1))
        breakdown = total_loss(s, g, cfg)
        assert breakdown.total == 0.0

    def test_p3_component_sum(self):
        cfg = LossConfig(betti_targets=BettiPair(1, 1))
        breakdown = total_loss(semantic_state([0.0, 1.0, 2.0]), path_graph(3), cfg)
        assert breakdown.consensus == pytest.approx(1.0)
        assert breakdown.ricci == 0.0
        assert breakdown.homology == 1.0
        assert breakdown.total == pytest.approx(2.0)

    def test_star_ricci_only(self):
        g = star_graph(4)
        s = SemanticState(values=np.zeros((4, 2)))
        cfg = LossConfig(betti_targets=BettiPair(1, 0))
        breakdown = total_loss(s, g, cfg)
        assert breakdown.consensus == 0.0
        assert breakdown.homology == 0.0
        assert breakdown.ricci == pytest.approx(3.0 * (2.0 - 1.0 - 1.0 / math.sqrt(3.0)))
        assert breakdown.total == pytest.approx(breakdown.ricci)

    def test_breakdown_sums_exactly(self):
        rng = np.random.default_rng(11)
        g = random_connected_graph(rng, 9, extra_edges=4)
        s = SemanticState(values=rng.standard_normal((9, 2)))
        cfg = LossConfig(betti_targets=BettiPair(2, 3),
                         l1_mode="scaled_laplacian", lambda_conn=0.5)
        b = total_loss(s, g, cfg)
        assert b.total == b.consensus + b.connection + b.ricci + b.homology

    def test_positive_definiteness_small_graphs(self):
        # Over every graph on n <= 5 nodes without isolated vertices (plus a
        # seeded n = 6 sample), the loss at a consensus state vanishes exactly
        # when curvature is non-negative and the Betti pair hits the target.
        targets = BettiPair(1, 1)
        cfg = LossConfig(betti_targets=targets)

        def check(n, pair_subset):
            g = build_graph(n, [(u, v, 1.0) for u, v in pair_subset])
            if any(d == 0.0 for d in g.degree):
                return
            s = SemanticState(values=np.ones((n, 2)))
            breakdown = total_loss(s, g, cfg)
            field = forman_curvature(g)
            expect_zero = (min(field.kappa.values()) >= 0.0
                           and betti(g).as_tuple() == targets.as_tuple())
            assert (breakdown.total == 0.0) == expect_zero

        for n in (3, 4, 5):
            all_pairs = list(itertools.combinations(range(n), 2))
            for bits in range(1, 2 ** len(all_pairs)):
                subset = [p for i, p in enumerate(all_pairs) if bits >> i & 1]
                check(n, subset)
        rng = np.random.default_rng(83)
        all_pairs6 = list(itertools.combinations(range(6), 2))
        for _ in range(1500):
            bits = int(rng.integers(1, 2 ** len(all_pairs6)))
            check(6, [p for i, p in enumerate(all_pairs6) if bits >> i & 1])

    def test_nonfinite_state_rejected(self):
        with pytest.raises(InvalidDimension):
            SemanticState(values=np.array([[np.nan], [0.0]]))


class TestGradient:
    def test_consensus_rows_fixed_point(self):
        g = cycle_graph(5)
        s = SemanticState(values=np.ones((5, 3)) * 2.7)
        assert np.all(grad_s(s, g) == 0.0)

    def test_p3_hand_value(self):
        g = path_graph(3)
        grad = grad_s(semantic_state([0.0, 1.0, 2.0]), g)
        assert grad.ravel().tolist() == [-1.0, 0.0, 1.0]

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(97)
        h = 1e-6
        for _ in range(25):
            n = int(rng.integers(2, 16))
            d = int(rng.integers(1, 5))
            g = random_connected_graph(rng, n, extra_edges=int(rng.integers(0, 6)))
            l1 = None
            if rng.uniform() < 0.5:
                m = rng.standard_normal((n, n))
                l1 = m @ m.T / n
            s = SemanticState(values=rng.standard_normal((n, d)))
            grad = grad_s(s, g, l1)

            def value(mat):
                st = SemanticState(values=mat)
                return consensus_loss(st, g) + connection_loss(st, l1)

            fd = np.zeros_like(grad)
            for i in range(n):
                for j in range(d):
                    plus = s.values.copy()
                    plus[i, j] += h
                    minus = s.values.copy()
                    minus[i, j] -= h
                    fd[i, j] = (value(plus) - value(minus)) / (2.0 * h)
            scale = max(np.abs(grad).max(), 1.0)
            assert np.abs(fd - grad).max() <= 1e-6 * scale

    def test_pl_inequality(self):
        rng = np.random.default_rng(113)
        for _ in range(15):
            n = int(rng.integers(2, 16))
            g = random_connected_graph(rng, n, extra_edges=int(rng.integers(0, 4)))
            values = rng.standard_normal((n, 2))
            values -= values.mean(axis=0, keepdims=True)
            s = SemanticState(values=values)
            lam2 = spectrum(g).lambda2
            grad_norm_sq = float(np.sum(grad_s(s, g) ** 2))
            assert grad_norm_sq >= 2.0 * lam2 * consensus_loss(s, g) - 1e-9


class TestCertificate:
    def test_p3_constants(self):
        cert = certificate(path_graph(3), LossConfig(betti_targets=BettiPair(1, 0)),
                           samples=4, seed=1)
        assert cert.mu == pytest.approx(1.0)
        assert cert.L == pytest.approx(3.0)
        assert cert.c_topo >= 0.0

    def test_c4_constants(self):
        cert = certificate(cycle_graph(4), LossConfig(betti_targets=BettiPair(1, 1)),
                           samples=4, seed=1)
        assert cert.mu == pytest.approx(2.0)
        assert cert.L == pytest.approx(4.0)

    def test_regular_hessian_bound(self):
        for k, seed in ((2, 3), (4, 5), (6, 7)):
            g = generate(GenSpec(kind="k_regular", n=16, k=k, seed=seed))
            cert = certificate(g, LossConfig(betti_targets=betti(g)),
                               samples=2, seed=0)
            assert cert.L <= 2.0 * k + 1e-9

    def test_disconnected_rejected(self):
        g = build_graph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(Disconnected):
            certificate(g, LossConfig())

    def test_alpha_functions_increase(self):
        cert = certificate(cycle_graph(4), LossConfig(betti_targets=BettiPair(1, 1)),
                           samples=4, seed=2)
        assert cert.mu <= cert.L
        rs = np.linspace(0.1, 5.0, 30)
        a1 = [cert.alpha1(r) for r in rs]
        a2 = [cert.alpha2(r) for r in rs]
        assert all(x < y for x, y in zip(a1, a1[1:]))
        assert all(x < y for x, y in zip(a2, a2[1:]))
        assert cert.alpha1(0.0) == cert.alpha2(0.0) == 0.0

    def test_sandwich_on_sampled_neighborhood(self):
        # Local sandwich around the target pair: the lower bound is checked in
        # the semantic coordinate (the topology part of the loss can vanish on
        # curvature-preserving weight changes), the upper bound on the joint
        # distance with states kept in the mean-value neighborhood.
        g_target = cycle_graph(4)
        cfg = LossConfig(betti_targets=BettiPair(1, 1))
        cert = certificate(g_target, cfg, samples=8, radius=1.0, seed=3)
        rng = np.random.default_rng(7)
        base = np.array([w for _, _, w in g_target.edges])
        pairs = [(u, v) for u, v, _ in g_target.edges]
        for _ in range(40):
            delta = rng.uniform(-1.0, 1.0, size=4)
            delta *= rng.uniform(0.0, 1.0) / math.sqrt(2.0 * float(delta @ delta))
            weights = np.maximum(base + delta, 1e-3)
            g = build_graph(4, [(pairs[i][0], pairs[i][1], float(weights[i]))
                                for i in range(4)])
            values = rng.standard_normal((4, 2))
            values *= rng.uniform(0.0, 2.0) / max(np.linalg.norm(values), 1e-12)
            s = SemanticState(values=values + rng.standard_normal(2))
            centered = s.values - s.values.mean(axis=0, keepdims=True)
            ds = float(np.linalg.norm(centered))
            da = math.sqrt(2.0 * float((weights - base) @ (weights - base)))
            r = math.sqrt(ds * ds + da * da)
            v = total_loss(s, g, cfg).total
            assert cert.alpha1(ds) <= v + 1e-9
            assert v <= cert.alpha2(r) + 1e-9
