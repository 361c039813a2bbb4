import math

import numpy as np
import pytest

from onn_lyap.curvature import forman_curvature, ricci_loss
from onn_lyap.dynamics import (
    OnnState,
    RunConfig,
    SurgeryConfig,
    SurgeryEvent,
    TrajectoryRecord,
    fit_rate,
    power_lambda_max,
    roa_member,
    run,
    semantic_step,
    surgery_decay,
    surgery_rewire,
    surgery_efficiency,
)
from onn_lyap.errors import NonPositiveLoss, NoSurgeryEvents, ZeroDenominator
from onn_lyap.graph_core import build_graph, laplacian, spectrum
from onn_lyap.homology import BettiPair, betti
from onn_lyap.loss import LossConfig, SemanticState, semantic_state, total_loss
from onn_lyap.generators import GenSpec, generate, init_state
from helpers import cycle_graph, path_graph, random_connected_graph


def make_record(events):
    return TrajectoryRecord(rows=[], events=events, final_state=None,
                            wall_time=0.0, config_seed=0)


class TestSemanticStep:
    def test_consensus_state_is_fixed_point(self):
        g = cycle_graph(5)
        s = SemanticState(values=np.full((5, 2), 3.14))
        state = OnnState(s=s, g=g)
        stepped = semantic_step(state, eta=0.3)
        assert np.all(stepped.s.values == s.values)
        assert stepped.iteration == 1

    def test_p3_hand_step(self):
        state = OnnState(s=semantic_state([0.0, 1.0, 2.0]), g=path_graph(3))
        stepped = semantic_step(state, eta=1.0 / 3.0)
        assert np.allclose(stepped.s.values.ravel(), [1.0 / 3.0, 1.0, 5.0 / 3.0])
        cfg = LossConfig(betti_targets=BettiPair(1, 0))
        before = total_loss(state.s, state.g, cfg).consensus
        after = total_loss(stepped.s, stepped.g, cfg).consensus
        assert before == pytest.approx(1.0)
        assert after == pytest.approx(4.0 / 9.0)

    def test_descent_for_safe_step_sizes(self):
        rng = np.random.default_rng(7)
        g = random_connected_graph(rng, 12, extra_edges=6)
        state = OnnState(s=SemanticState(values=rng.standard_normal((12, 3))), g=g)
        eta = 1.0 / spectrum(g).lambda_max
        cfg = LossConfig(betti_targets=betti(g))
        previous = total_loss(state.s, state.g, cfg).total
        for _ in range(1000):
            state = semantic_step(state, eta)
            current = total_loss(state.s, state.g, cfg).total
            assert current <= previous + 1e-12 * max(previous, 1.0)
            previous = current

    def test_power_iteration_matches_dense(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            g = random_connected_graph(rng, int(rng.integers(3, 40)), extra_edges=8)
            lap = laplacian(g)
            assert power_lambda_max(lap) == pytest.approx(
                float(np.linalg.eigvalsh(lap)[-1]), rel=1e-9)


class TestSurgeryDecay:
    def decay_cfg(self, delta=0.25, theta=0.0):
        return SurgeryConfig(mode="decay", p=1.0, delta=delta, theta=theta)

    def test_trigger_not_met_is_identity(self):
        g = cycle_graph(4)
        state = OnnState(s=SemanticState(values=np.zeros((4, 1))), g=g)
        loss_cfg = LossConfig(betti_targets=BettiPair(1, 1))
        out = surgery_decay(state, self.decay_cfg(), loss_cfg)
        assert out.g is g

    def test_triggered_scales_weights(self):
        g = cycle_graph(4)
        state = OnnState(s=SemanticState(values=np.zeros((4, 1))), g=g)
        loss_cfg = LossConfig(betti_targets=BettiPair(1, 3))  # loss = 4 > 0
        out = surgery_decay(state, self.decay_cfg(delta=0.25), loss_cfg)
        assert all(w == pytest.approx(0.75) for _, _, w in out.g.edges)
        assert betti(out.g).as_tuple() == betti(g).as_tuple()

    def test_zero_delta_is_identity(self):
        g = cycle_graph(4)
        state = OnnState(s=SemanticState(values=np.zeros((4, 1))), g=g)
        loss_cfg = LossConfig(betti_targets=BettiPair(1, 3))
        out = surgery_decay(state, self.decay_cfg(delta=0.0), loss_cfg)
        assert out.g is g


class TestSurgeryRewire:
    def rewire_cfg(self, delta=1.0):
        return SurgeryConfig(mode="rewire", p=1.0, delta=delta)

    def test_tree_input_no_eligible_edge(self):
        g = path_graph(5)
        state = OnnState(s=SemanticState(values=np.arange(5.0)[:, None]), g=g)
        out, swaps = surgery_rewire(state, self.rewire_cfg(),
                                    LossConfig(betti_targets=BettiPair(1, 0)))
        assert swaps == 0
        assert out.g is g

    def test_nonnegative_curvature_no_swaps(self):
        g = cycle_graph(4)  # every edge has curvature exactly 0
        state = OnnState(s=SemanticState(values=np.arange(4.0)[:, None]), g=g)
        out, swaps = surgery_rewire(state, self.rewire_cfg(),
                                    LossConfig(betti_targets=BettiPair(1, 1)))
        assert swaps == 0

    def test_negative_chord_instance_swaps_and_preserves_betti(self):
        # C4 plus a heavy chord: the chord region carries negative curvature,
        # so the operator must commit at least one gated swap.
        g = build_graph(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0),
                            (0, 2, 2.0)])
        assert min(forman_curvature(g).kappa.values()) < 0.0
        state = OnnState(s=SemanticState(values=np.array(
            [[0.0], [0.05], [1.0], [0.1]])), g=g)
        loss_cfg = LossConfig(betti_targets=betti(g))
        before = ricci_loss(g, "hinge_zero")
        out, swaps = surgery_rewire(state, self.rewire_cfg(delta=0.2), loss_cfg)
        assert swaps == 1
        assert betti(out.g).as_tuple() == betti(g).as_tuple()
        assert ricci_loss(out.g, "hinge_zero") < before

    def test_budget_limits_swaps(self):
        rng = np.random.default_rng(3)
        g = generate(GenSpec(kind="community", n=24, k=2, communities=4, seed=9))
        state = OnnState(s=SemanticState(values=rng.standard_normal((24, 2))), g=g)
        loss_cfg = LossConfig(betti_targets=betti(g))
        _, swaps = surgery_rewire(state, SurgeryConfig(mode="rewire", p=1.0,
                                                       delta=1.0 / g.edge_count),
                                  loss_cfg)
        assert swaps <= 1


class TestRun:
    def test_zero_iterations_single_row(self):
        g = path_graph(4)
        state = OnnState(s=semantic_state([0.0, 1.0, 2.0, 3.0]), g=g)
        cfg = RunConfig(iterations=0, loss=LossConfig(betti_targets=BettiPair(1, 0)))
        traj = run(state, cfg)
        assert len(traj.rows) == 1
        assert traj.rows[0].iteration == 0

    def test_p4_contraction_oracle(self):
        g = path_graph(4)
        lam2 = 2.0 - math.sqrt(2.0)
        lam_max = 2.0 + math.sqrt(2.0)
        rng = np.random.default_rng(41)
        state = OnnState(s=SemanticState(values=rng.standard_normal((4, 1))), g=g)
        cfg = RunConfig(iterations=120, eta=1.0 / lam_max,
                        loss=LossConfig(betti_targets=BettiPair(1, 0),
                                        lambda_ricci=0.0, lambda_homology=0.0),
                        surgery=SurgeryConfig(mode="rewire", p=0.0))
        traj = run(state, cfg)
        v = traj.losses()
        # Asymptotic regime: transients of the faster modes are gone by
        # iteration 60 while V is still far above the float noise floor.
        ratios = v[61:101] / v[60:100]
        expected = (1.0 - lam2 / lam_max) ** 2
        assert expected == pytest.approx(0.68629, abs=1e-5)
        assert np.max(np.abs(ratios - expected)) <= 0.01 * expected

    def test_community_run_keeps_betti_constant(self):
        g = generate(GenSpec(kind="community", n=60, k=2, communities=6, seed=4))
        s = init_state(60, 2, "gaussian", seed=5)
        cfg = RunConfig(
            iterations=400, eta="auto", seed=12,
            loss=LossConfig(betti_targets=betti(g)),
            surgery=SurgeryConfig(mode="rewire", p=0.6, delta=0.05),
        )
        traj = run(OnnState(s=s, g=g), cfg)
        assert {r.beta0 for r in traj.rows} == {1}
        assert {r.beta1 for r in traj.rows} == {6}
        for r in traj.rows:
            assert r.beta1 == r.beta1  # column present
        assert any(r.surgery for r in traj.rows)

    def test_auto_eta_monotone_without_surgery(self):
        g = generate(GenSpec(kind="community", n=30, k=2, communities=3, seed=8))
        s = init_state(30, 2, "gaussian", seed=9)
        cfg = RunConfig(iterations=300, eta="auto", seed=1,
                        loss=LossConfig(betti_targets=betti(g)),
                        surgery=SurgeryConfig(mode="rewire", p=0.0),
                        debug_checks=True)
        traj = run(OnnState(s=s, g=g), cfg)
        v = traj.losses()
        assert np.all(np.diff(v) <= 1e-9 * np.maximum(v[:-1], 1.0))

    def test_determinism_bit_identical(self, tmp_path):
        g = generate(GenSpec(kind="community", n=24, k=2, communities=4, seed=2))
        cfg = RunConfig(iterations=120, eta="auto", seed=77,
                        loss=LossConfig(betti_targets=betti(g)),
                        surgery=SurgeryConfig(mode="rewire", p=0.5, delta=0.1))
        outputs = []
        for name in ("a.csv", "b.csv"):
            s = init_state(24, 2, "gaussian", seed=6)
            traj = run(OnnState(s=s, g=g), cfg)
            path = tmp_path / name
            traj.to_csv(path)
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]

    def test_ricci_flow_mode_preserves_betti(self):
        g = generate(GenSpec(kind="community", n=24, k=4, communities=3, seed=3))
        s = init_state(24, 2, "gaussian", seed=4)
        cfg = RunConfig(iterations=60, eta="auto", seed=5,
                        loss=LossConfig(betti_targets=betti(g)),
                        surgery=SurgeryConfig(mode="ricci_flow", p=0.5, k_target=2))
        traj = run(OnnState(s=s, g=g), cfg)
        assert len({(r.beta0, r.beta1) for r in traj.rows}) == 1


class TestFitRate:
    def test_exact_exponential(self):
        rows = []
        for k in range(200):
            rows.append(type("R", (), {"total": 3.0 * math.exp(-0.01 * k)})())
        traj = make_record([])
        traj.rows = rows
        mu, r2 = fit_rate(traj)
        assert mu == pytest.approx(0.01, rel=1e-9)
        assert r2 == pytest.approx(1.0)

    def test_constant_loss(self):
        rows = [type("R", (), {"total": 2.5})() for _ in range(50)]
        traj = make_record([])
        traj.rows = rows
        mu, _ = fit_rate(traj)
        assert mu == pytest.approx(0.0, abs=1e-12)

    def test_nonpositive_loss_rejected(self):
        rows = [type("R", (), {"total": v})() for v in (1.0, 0.5, 0.0, 0.2)]
        traj = make_record([])
        traj.rows = rows
        with pytest.raises(NonPositiveLoss):
            fit_rate(traj)

    def test_window_discards_head(self):
        # Head is far off the asymptote; the default window must ignore it.
        rows = [type("R", (), {"total": 100.0})()]
        rows += [type("R", (), {"total": math.exp(-0.02 * k)})() for k in range(99)]
        traj = make_record([])
        traj.rows = rows
        mu, _ = fit_rate(traj)
        assert mu == pytest.approx(0.02, rel=1e-6)


class TestSurgeryEfficiency:
    def test_no_events_raises(self):
        with pytest.raises(NoSurgeryEvents):
            surgery_efficiency(make_record([]))

    def test_reference_ratio(self):
        events = [SurgeryEvent(iteration=1, swaps=1, delta_topo=0.05,
                               delta_consensus=0.02)]
        assert surgery_efficiency(make_record(events)) == pytest.approx(2.5)

    def test_zero_denominator(self):
        events = [SurgeryEvent(iteration=1, swaps=1, delta_topo=0.1,
                               delta_consensus=0.0)]
        with pytest.raises(ZeroDenominator):
            surgery_efficiency(make_record(events))

    def test_decay_event_measured_from_run(self):
        g = build_graph(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)])
        s = init_state(4, 1, "gaussian", seed=3)
        cfg = RunConfig(iterations=5, eta=0.1, seed=1,
                        loss=LossConfig(betti_targets=BettiPair(1, 3)),
                        surgery=SurgeryConfig(mode="decay", p=1.0, delta=0.2))
        traj = run(OnnState(s=s, g=g), cfg)
        assert traj.events
        xi = surgery_efficiency(traj)
        assert math.isfinite(xi)


class TestRoaMember:
    def test_c4_in_basin(self):
        assert roa_member(cycle_graph(4), BettiPair(1, 1))

    def test_p3_outside(self):
        assert not roa_member(path_graph(3), BettiPair(1, 1))

    def test_component_mismatch(self):
        g = build_graph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        assert not roa_member(g, BettiPair(1, 0))
