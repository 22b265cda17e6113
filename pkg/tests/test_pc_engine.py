import numpy as np
import pytest

from pcnta.core.graph import build_conv_architecture, build_mlp
from pcnta.core.layers import Activation
from pcnta.data.frames import Frame, FrameStream, one_hot, synthetic_stream
from pcnta.engine import pc_engine
from pcnta.engine.config import TrainConfig
from pcnta.engine.optim import Optimizer
from pcnta.errors import ConfigError, DimensionError, EmptyStreamError


def zero_graph(sizes=(3, 4, 2)):
    g = build_mlp(0, sizes, Activation.RELU)
    for weight, bias in g.params:
        weight[...] = 0.0
        bias[...] = 0.0
    return g


def stream_of(images, labels):
    frames = tuple(
        Frame(image=image, label=label, object_id=label + 1, view_angle_index=i)
        for i, (image, label) in enumerate(zip(images, labels))
    )
    return FrameStream(frames=frames)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.eta_theta == 4e-5
        assert cfg.amortize

    @pytest.mark.parametrize("kwargs", [
        {"eta_v": 0.0},
        {"eta_theta": -1.0},
        {"max_inference_iters": 0},
        {"convergence_tol": -1e-3},
        {"update_count_threshold": -1.0},
    ])
    def test_invalid_values(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class TestInference:
    def test_predicted_class_ties_go_low(self):
        assert pc_engine.predicted_class(np.array([0.2, 0.7, 0.7])) == 1

    def test_clamp_output_shape_check(self, rng):
        g = build_mlp(0, (3, 4, 2))
        g.forward_predictions(rng.normal(size=3))
        with pytest.raises(DimensionError):
            pc_engine.clamp_output(g, np.zeros(3))

    def test_step_without_error_is_a_no_op(self, rng):
        g = build_mlp(0, (3, 4, 2))
        g.forward_predictions(rng.normal(size=3))
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, g.nodes[g.output_index].v_hat.copy())
        before = [node.v.copy() for node in g.nodes]
        assert pc_engine.inference_step(g, 0.1) == 0.0
        for node, value in zip(g.nodes, before):
            np.testing.assert_array_equal(node.v, value)

    def test_converged_graph_stops_after_one_iteration(self, rng):
        g = build_mlp(0, (3, 4, 2))
        g.forward_predictions(rng.normal(size=3))
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, g.nodes[g.output_index].v_hat.copy())
        assert pc_engine.run_inference(g, TrainConfig(max_inference_iters=10, convergence_tol=1e-9)) == 1

    def test_budget_only_runs_every_iteration(self, rng):
        g = build_mlp(0, (3, 4, 2))
        g.forward_predictions(rng.normal(size=3))
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, one_hot(0, 2))
        assert pc_engine.run_inference(g, TrainConfig(max_inference_iters=7, convergence_tol=0.0)) == 7

    def test_top_hidden_gradient_contracts(self, rng):
        g = build_mlp(2, (5, 4, 3, 2), Activation.RELU)
        g.forward_predictions(rng.normal(size=5))
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, one_hot(1, 2))
        eta = 0.2
        top = g.output_index - 1
        for _ in range(5):
            before = g.state_gradient(top)
            pc_engine.inference_step(g, eta)
            np.testing.assert_allclose(g.state_gradient(top), (1.0 - eta) * before, rtol=1e-10, atol=1e-12)

    def test_cold_start_vfe_is_non_decreasing(self, rng):
        g = build_mlp(4, (6, 5, 4, 3), Activation.LINEAR)
        g.forward_predictions(rng.normal(size=6))
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, one_hot(2, 3))
        trace = [g.vfe()]
        pc_engine.run_inference(g, TrainConfig(eta_v=0.1, max_inference_iters=150), trace)
        assert np.all(np.diff(trace) >= -1e-14)
        assert trace[-1] > trace[0]


class TestWeightUpdate:
    def test_count_matches_brute_force(self, rng):
        g = build_mlp(1, (5, 4, 3))
        g.forward_predictions(rng.normal(size=5))
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, one_hot(0, 3))
        pc_engine.run_inference(g, TrainConfig(max_inference_iters=20))
        cfg = TrainConfig(eta_theta=0.01)
        expected = sum(
            int(np.count_nonzero(np.abs(cfg.eta_theta * t) > 0.0))
            for e in range(len(g.edges)) for t in g.weight_gradient(e)
        )
        before = [w.copy() for w, _ in g.params]
        direction = g.weight_gradient(0)[0]
        assert pc_engine.weight_update(g, cfg) == expected
        np.testing.assert_allclose(g.params[0][0], before[0] + cfg.eta_theta * direction)

    def test_threshold_excludes_small_updates(self, rng):
        g = build_mlp(1, (5, 4, 3))
        g.forward_predictions(rng.normal(size=5))
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, one_hot(0, 3))
        pc_engine.run_inference(g, TrainConfig(max_inference_iters=20))
        assert pc_engine.weight_update(g, TrainConfig(eta_theta=0.01, update_count_threshold=1e6)) == 0


class TestSamples:
    def test_zero_parameter_golden_trace(self):
        g = zero_graph()
        cfg = TrainConfig(eta_v=0.1, eta_theta=0.5, max_inference_iters=5, convergence_tol=1e-9)
        result, snapshot = pc_engine.train_first_sample(g, np.array([0.3, -0.2, 0.9]), one_hot(1, 2), cfg)
        assert result.iterations_used == 1
        assert result.final_vfe == 0.5
        assert result.nonzero_weight_updates == 1
        assert result.predicted_class == 0
        np.testing.assert_array_equal(g.edges[1].bias, [0.0, 0.5])
        np.testing.assert_array_equal(snapshot.values[0], np.zeros(4))

    def test_zero_parameter_trace_without_tolerance_uses_budget(self):
        g = zero_graph()
        cfg = TrainConfig(max_inference_iters=5, convergence_tol=0.0)
        result, _ = pc_engine.train_first_sample(g, np.ones(3), one_hot(0, 2), cfg)
        assert result.iterations_used == 5

    def test_cold_subsequent_equals_first_sample(self, rng):
        x1, x2 = rng.normal(size=5), rng.normal(size=5)
        cfg = TrainConfig(eta_theta=0.05, max_inference_iters=30, amortize=False)
        a = build_mlp(5, (5, 4, 3))
        b = build_mlp(5, (5, 4, 3))
        _, snap_a = pc_engine.train_first_sample(a, x1, one_hot(0, 3), cfg)
        pc_engine.train_first_sample(b, x1, one_hot(0, 3), cfg)
        result_a, _ = pc_engine.train_subsequent_sample(a, x2, one_hot(2, 3), snap_a, cfg)
        result_b, _ = pc_engine.train_first_sample(b, x2, one_hot(2, 3), cfg)
        assert result_a == result_b
        for (wa, ba), (wb, bb) in zip(a.params, b.params):
            np.testing.assert_array_equal(wa, wb)
            np.testing.assert_array_equal(ba, bb)

    def test_warm_start_from_cold_snapshot_equals_first_sample(self, rng):
        x, label = rng.normal(size=5), one_hot(1, 3)
        cfg = TrainConfig(eta_theta=0.05, max_inference_iters=30, amortize=True)
        a = build_mlp(7, (5, 4, 3))
        b = build_mlp(7, (5, 4, 3))
        a.forward_predictions(x)
        a.init_states_from_predictions()
        cold = a.snapshot()
        result_a, snap_a = pc_engine.train_subsequent_sample(a, x, label, cold, cfg)
        result_b, snap_b = pc_engine.train_first_sample(b, x, label, cfg)
        assert result_a == result_b
        for va, vb in zip(snap_a.values, snap_b.values):
            np.testing.assert_array_equal(va, vb)
        for (wa, ba), (wb, bb) in zip(a.params, b.params):
            np.testing.assert_array_equal(wa, wb)
            np.testing.assert_array_equal(ba, bb)

    def test_warm_start_on_identical_frame_converges_faster(self, rng):
        g = build_mlp(6, (6, 5, 4, 3))
        x = rng.normal(size=6)
        label = one_hot(1, 3)
        cfg = TrainConfig(eta_v=0.1, eta_theta=1e-12, max_inference_iters=5000, convergence_tol=1e-8)
        first, snap = pc_engine.train_first_sample(g, x, label, cfg)
        second, _ = pc_engine.train_subsequent_sample(g, x, label, snap, cfg)
        assert first.iterations_used < cfg.max_inference_iters
        assert 4 * second.iterations_used < first.iterations_used

    def test_vfe_trace_recorded(self, rng):
        g = build_mlp(0, (4, 3, 2))
        cfg = TrainConfig(max_inference_iters=9, record_vfe=True)
        result, _ = pc_engine.train_first_sample(g, rng.normal(size=4), one_hot(0, 2), cfg)
        assert len(result.vfe_trace) == result.iterations_used == 9
        assert result.vfe_trace[-1] == result.final_vfe


class TestEpoch:
    def test_one_result_per_frame(self, rng):
        g = build_mlp(0, (4, 3, 2))
        stream = stream_of([rng.normal(size=4) for _ in range(6)], [0, 1, 0, 1, 0, 1])
        results = pc_engine.train_epoch(g, stream, TrainConfig(max_inference_iters=5))
        assert len(results) == 6
        assert g.last_snapshot is not None

    def test_empty_stream(self):
        with pytest.raises(EmptyStreamError):
            pc_engine.train_epoch(build_mlp(0, (4, 3, 2)), FrameStream(frames=()), TrainConfig())

    def test_shared_optimizer_is_used(self, rng):
        g = build_mlp(0, (4, 3, 2))
        stream = stream_of([rng.normal(size=4)], [1])
        optimizer = Optimizer(0.0)
        before = [w.copy() for w, _ in g.params]
        results = pc_engine.train_epoch(g, stream, TrainConfig(max_inference_iters=5), optimizer)
        assert results[0].nonzero_weight_updates == 0
        for (w, _), old in zip(g.params, before):
            np.testing.assert_array_equal(w, old)


class TestConstantFrames:
    """Warm and cold starts settle at the same fixed point; only the iteration count differs."""

    def run(self, amortize):
        g = build_mlp(6, (6, 5, 4, 3))
        x = np.random.default_rng(11).normal(size=6)
        cfg = TrainConfig(
            eta_v=0.1, eta_theta=1e-3, max_inference_iters=5000, convergence_tol=1e-8, amortize=amortize,
        )
        return g, pc_engine.train_epoch(g, stream_of([x] * 8, [1] * 8), cfg)

    def test_first_frame_is_a_cold_start_either_way(self):
        _, warm = self.run(amortize=True)
        _, cold = self.run(amortize=False)
        assert warm[0] == cold[0]

    def test_update_counts_match_cold_start(self):
        _, warm = self.run(amortize=True)
        _, cold = self.run(amortize=False)
        assert [r.nonzero_weight_updates for r in warm] == [r.nonzero_weight_updates for r in cold]

    def test_weights_track_cold_start(self):
        g_warm, _ = self.run(amortize=True)
        g_cold, _ = self.run(amortize=False)
        for (wa, ba), (wb, bb) in zip(g_warm.params, g_cold.params):
            np.testing.assert_allclose(wa, wb, rtol=0, atol=1e-8)
            np.testing.assert_allclose(ba, bb, rtol=0, atol=1e-8)

    def test_warm_start_needs_fewer_iterations(self):
        _, warm = self.run(amortize=True)
        _, cold = self.run(amortize=False)
        assert all(c.iterations_used < 5000 for c in cold)
        for w, c in zip(warm[1:], cold[1:]):
            assert w.iterations_used < c.iterations_used


class TestEvaluate:
    def test_biased_output_gets_one_class_right(self):
        g = zero_graph(sizes=(3, 4, 20))
        g.edges[-1].bias[0] = 1.0
        stream = stream_of([np.ones(3)] * 20, list(range(20)))
        assert pc_engine.evaluate(g, stream) == pytest.approx(1 / 20)

    def test_does_not_touch_buffers(self, rng):
        g = build_mlp(0, (3, 4, 2))
        g.forward_predictions(rng.normal(size=3))
        g.init_states_from_predictions()
        before = [(n.v.copy(), n.v_hat.copy(), n.eps.copy()) for n in g.nodes]
        pc_engine.evaluate(g, stream_of([rng.normal(size=3)] * 3, [0, 1, 0]))
        for node, (v, v_hat, eps) in zip(g.nodes, before):
            np.testing.assert_array_equal(node.v, v)
            np.testing.assert_array_equal(node.v_hat, v_hat)
            np.testing.assert_array_equal(node.eps, eps)

    def test_untrained_network_is_near_chance(self):
        accuracies = []
        for seed in range(5):
            _, test = synthetic_stream(seed, num_classes=20, frames_per_class=8, size=16)
            g = build_conv_architecture(seed, input_size=16, conv_filters=2, kernel=5, hidden=(8,), num_classes=20)
            accuracies.append(pc_engine.evaluate(g, test))
        assert max(accuracies) <= 0.25
        assert np.mean(accuracies) <= 0.15

    def test_empty_test_set(self):
        with pytest.raises(EmptyStreamError):
            pc_engine.evaluate(build_mlp(0, (3, 2)), FrameStream(frames=()))
