import numpy as np
import pytest

from pcnta.core.graph import build_conv_architecture, build_mlp
from pcnta.core.layers import Activation
from pcnta.data.frames import Frame, FrameStream, one_hot
from pcnta.engine import bp_engine, pc_engine
from pcnta.engine.config import TrainConfig
from pcnta.engine.optim import Optimizer
from pcnta.errors import DimensionError


def chain_1_1_1():
    g = build_mlp(0, (1, 1, 1), Activation.LINEAR)
    g.edges[0].weight[...] = 2.0
    g.edges[0].bias[...] = 0.0
    g.edges[1].weight[...] = 3.0
    g.edges[1].bias[...] = 0.0
    return g


class TestGradients:
    def test_hand_derivation(self):
        g = chain_1_1_1()
        grads = bp_engine.bp_gradients(g, np.array([1.0]), np.array([10.0]))
        (dW0, dB0), (dW1, dB1) = grads.per_edge
        np.testing.assert_array_equal(dW1, [[-8.0]])
        np.testing.assert_array_equal(dB1, [-4.0])
        np.testing.assert_array_equal(dW0, [[-12.0]])
        np.testing.assert_array_equal(dB0, [-12.0])

    def test_loss(self):
        assert bp_engine.mse_loss(np.array([6.0]), np.array([10.0])) == 8.0

    def test_label_shape(self):
        with pytest.raises(DimensionError):
            bp_engine.bp_gradients(build_mlp(0, (3, 2)), np.zeros(3), np.zeros(4))

    def test_forward_is_bit_identical_to_pc_predictions(self, rng):
        g = build_conv_architecture(1, input_size=16, conv_filters=3, kernel=5, hidden=(6, 4), num_classes=3)
        x = rng.uniform(size=g.input_shape)
        output, _ = bp_engine.bp_forward(g, x)
        g.forward_predictions(x)
        np.testing.assert_array_equal(output, g.nodes[g.output_index].v_hat)

    def test_gradient_shapes_follow_params(self, rng):
        g = build_conv_architecture(1, input_size=16, conv_filters=3, kernel=5, hidden=(6, 4), num_classes=3)
        grads = bp_engine.bp_gradients(g, rng.uniform(size=g.input_shape), one_hot(0, 3))
        for (dW, dB), (W, b) in zip(grads.per_edge, g.params):
            assert dW.shape == W.shape and dB.shape == b.shape


class TestTraining:
    def test_step_reduces_loss(self, rng):
        g = build_mlp(3, (5, 4, 3))
        x, label = rng.normal(size=5), one_hot(2, 3)
        before = bp_engine.mse_loss(g.predict(x), label)
        bp_engine.bp_train_step(g, x, label, Optimizer(0.05))
        assert bp_engine.mse_loss(g.predict(x), label) < before

    def test_step_count_is_nonzero_gradient_count(self, rng):
        g = build_mlp(3, (5, 4, 3))
        x, label = rng.normal(size=5), one_hot(0, 3)
        grads = bp_engine.bp_gradients(g, x, label)
        expected = sum(int(np.count_nonzero(t)) for pair in grads.per_edge for t in pair)
        assert bp_engine.bp_train_step(g, x, label, Optimizer(0.05)) == expected

    def test_epoch_reports_zero_iterations(self, rng):
        g = build_mlp(3, (5, 4, 3))
        frames = tuple(Frame(rng.normal(size=5), k % 3, k % 3 + 1, k) for k in range(4))
        results = bp_engine.bp_train_epoch(g, FrameStream(frames), TrainConfig(), Optimizer(0.01))
        assert len(results) == 4
        assert all(r.iterations_used == 0 for r in results)


class TestEquivalence:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_linear_fixture_cosine_is_one(self, seed):
        report = bp_engine.pc_bp_equivalence_fixture(seed, Activation.LINEAR, max_inference_iters=200)
        for cosine in report.per_edge_cosine:
            assert abs(cosine - 1.0) <= 1e-9

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_relu_fixture_cosine(self, seed):
        report = bp_engine.pc_bp_equivalence_fixture(seed, Activation.RELU, max_inference_iters=200)
        assert min(report.per_edge_cosine) >= 0.99

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_fixture_gradient_norm_after_200_steps(self, seed):
        g = build_mlp(seed, (10, 8, 6, 4))
        rng = np.random.default_rng(seed + 1)
        x = rng.uniform(-1.0, 1.0, size=10)
        label = one_hot(int(rng.integers(4)), 4)
        g.forward_predictions(x)
        g.init_states_from_predictions()
        pc_engine.clamp_output(g, label)
        norms = [pc_engine.inference_step(g, 0.05) for _ in range(200)]
        # top hidden gradient contracts by 0.95 per step; 0.95**200 is about 3.5e-5
        assert 1e-6 < norms[-1] < 1e-4

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_fixture_tolerance_needs_larger_step(self, seed):
        slow = bp_engine.pc_bp_equivalence_fixture(seed, eta_v=0.05, max_inference_iters=200, convergence_tol=1e-6)
        fast = bp_engine.pc_bp_equivalence_fixture(seed, eta_v=0.1, max_inference_iters=200, convergence_tol=1e-6)
        assert slow.iterations_used == 200
        assert fast.iterations_used < 200

    def test_converged_pc_matches_backprop(self):
        report = bp_engine.pc_bp_equivalence_fixture(
            0, Activation.RELU, max_inference_iters=20000, convergence_tol=1e-12,
        )
        assert report.iterations_used < 20000
        assert max(report.per_edge_rel_error) < 1e-6

    def test_comparison_leaves_weights_alone(self, rng):
        g = build_mlp(0, (6, 5, 3))
        before = [(w.copy(), b.copy()) for w, b in g.params]
        bp_engine.compare_pc_to_bp(g, rng.normal(size=6), one_hot(1, 3), TrainConfig(max_inference_iters=20))
        for (w, b), (w0, b0) in zip(g.params, before):
            np.testing.assert_array_equal(w, w0)
            np.testing.assert_array_equal(b, b0)

    def test_cosine_conventions(self):
        zero = np.zeros(3)
        assert bp_engine.cosine_similarity(zero, zero) == 1.0
        assert bp_engine.cosine_similarity(zero, np.ones(3)) == 0.0
        assert bp_engine.cosine_similarity(np.ones(3), -np.ones(3)) == pytest.approx(-1.0)
