import numpy as np
import pytest

from pcnta.core.graph import (
    COIL20_INPUT_SHAPE,
    build_conv_architecture,
    build_graph,
    build_mlp,
    coil20_architecture_specs,
)
from pcnta.core.layers import (
    Activation,
    Conv2D,
    Dense,
    Flatten,
    LayerSpec,
    MaxPool,
    count_parameters,
    infer_node_shapes,
)
from pcnta.errors import GraphBuildError, PcntaError, SnapshotError


def chain_1_1_1(w0=2.0, w1=3.0):
    """Scalar linear chain x → 2x → 3·(2x), zero biases."""
    g = build_mlp(0, (1, 1, 1), Activation.LINEAR)
    g.edges[0].weight[...] = w0
    g.edges[0].bias[...] = 0.0
    g.edges[1].weight[...] = w1
    g.edges[1].bias[...] = 0.0
    return g


class TestBuild:
    def test_full_size_node_shapes(self):
        shapes = infer_node_shapes(coil20_architecture_specs(), COIL20_INPUT_SHAPE)
        assert shapes == [(1, 128, 128), (124, 62, 62), (200,), (128,), (20,)]

    def test_full_size_parameter_count(self):
        assert count_parameters(coil20_architecture_specs(), COIL20_INPUT_SHAPE) == 95_362_932

    def test_full_size_activations(self):
        specs = coil20_architecture_specs()
        trainable = [s for s in specs if s.trainable]
        assert [s.activation for s in trainable] == [
            Activation.RELU, Activation.RELU, Activation.LINEAR, Activation.LINEAR,
        ]

    def test_reduced_conv_shapes(self):
        g = build_conv_architecture(0, input_size=16, conv_filters=4, kernel=5, hidden=(12, 8), num_classes=5)
        assert g.node_shapes == [(1, 16, 16), (4, 6, 6), (12,), (8,), (5,)]
        assert g.parameter_count == count_parameters(g.specs, g.input_shape)

    def test_pool_without_conv(self):
        with pytest.raises(GraphBuildError, match=r"layer 0 \(MaxPool\)"):
            build_graph([LayerSpec(MaxPool(2)), LayerSpec(Dense(3))], 0, (4,))

    def test_dense_on_image_needs_flatten(self):
        specs = [LayerSpec(Conv2D(2, 3), Activation.RELU), LayerSpec(Dense(4))]
        with pytest.raises(GraphBuildError, match=r"layer 1 \(Dense\)"):
            build_graph(specs, 0, (1, 6, 6))

    def test_odd_pool_input(self):
        specs = [LayerSpec(Conv2D(2, 2), Activation.RELU), LayerSpec(MaxPool(2)), LayerSpec(Flatten()), LayerSpec(Dense(2))]
        with pytest.raises(GraphBuildError, match="not divisible"):
            build_graph(specs, 0, (1, 6, 6))

    def test_pool_carries_no_activation(self):
        with pytest.raises(GraphBuildError):
            LayerSpec(MaxPool(2), Activation.RELU)

    def test_empty_architecture(self):
        with pytest.raises(GraphBuildError):
            build_graph([], 0, (3,))

    def test_same_seed_same_parameters(self):
        a = build_mlp(7, (5, 4, 3))
        b = build_mlp(7, (5, 4, 3))
        for (wa, ba), (wb, bb) in zip(a.params, b.params):
            np.testing.assert_array_equal(wa, wb)
            np.testing.assert_array_equal(ba, bb)

    def test_different_seed_different_parameters(self):
        a = build_mlp(7, (5, 4, 3))
        b = build_mlp(8, (5, 4, 3))
        assert not np.array_equal(a.params[0][0], b.params[0][0])

    def test_buffers_start_zero(self):
        g = build_mlp(0, (5, 4, 3))
        for node in g.nodes:
            assert not node.v.any() and not node.v_hat.any() and not node.eps.any()


class TestStates:
    def test_forward_predictions_match_run_edges(self, rng):
        g = build_conv_architecture(3, input_size=16, conv_filters=2, kernel=5, hidden=(6, 4), num_classes=3)
        x = rng.uniform(size=g.input_shape)
        activations, _ = g.run_edges(x)
        g.forward_predictions(x)
        for node, value in zip(g.nodes, activations):
            np.testing.assert_array_equal(node.v_hat, value)
        np.testing.assert_array_equal(g.nodes[0].v, x)

    def test_cold_start_has_zero_errors(self, rng):
        g = build_mlp(0, (5, 4, 3))
        g.forward_predictions(rng.normal(size=5))
        g.init_states_from_predictions()
        assert g.vfe() == 0.0
        for node in g.nodes[1:]:
            np.testing.assert_array_equal(node.v, node.v_hat)

    def test_clamp_sets_output_error(self):
        g = chain_1_1_1()
        g.forward_predictions(np.array([1.0]))
        g.init_states_from_predictions()
        g.clamp(g.output_index, np.array([10.0]))
        g.refresh_errors()
        np.testing.assert_array_equal(g.nodes[2].eps, [4.0])
        assert g.vfe() == 8.0

    def test_errors_before_forward(self):
        g = build_mlp(0, (3, 2, 2))
        with pytest.raises(PcntaError):
            g.init_states_from_predictions()
        with pytest.raises(PcntaError):
            g.weight_gradient(0)

    def test_snapshot_round_trip(self, rng):
        g = build_mlp(0, (5, 4, 3, 2))
        g.forward_predictions(rng.normal(size=5))
        g.init_states_from_predictions()
        snap = g.snapshot()
        before = [g.nodes[i].v.copy() for i in g.hidden_indices]
        for i in g.hidden_indices:
            g.nodes[i].v = g.nodes[i].v + 1.0
        g.restore_states(snap)
        for i, value in zip(g.hidden_indices, before):
            np.testing.assert_array_equal(g.nodes[i].v, value)

    def test_snapshot_is_an_independent_copy(self, rng):
        g = build_mlp(0, (5, 4, 3))
        g.forward_predictions(rng.normal(size=5))
        g.init_states_from_predictions()
        snap = g.snapshot()
        g.nodes[1].v[...] = 99.0
        assert not np.any(snap.values[0] == 99.0)
        assert not snap.values[0].flags.writeable

    def test_restore_shape_mismatch(self, rng):
        small = build_mlp(0, (5, 4, 3))
        other = build_mlp(0, (5, 6, 3))
        other.forward_predictions(rng.normal(size=5))
        other.init_states_from_predictions()
        with pytest.raises(SnapshotError):
            small.restore_states(other.snapshot())

    def test_predict_leaves_buffers_alone(self, rng):
        g = build_mlp(0, (5, 4, 3))
        g.forward_predictions(rng.normal(size=5))
        before = [node.v_hat.copy() for node in g.nodes]
        g.predict(rng.normal(size=5))
        for node, value in zip(g.nodes, before):
            np.testing.assert_array_equal(node.v_hat, value)


class TestGradients:
    def test_state_gradient_hand_case(self):
        g = chain_1_1_1()
        g.forward_predictions(np.array([1.0]))
        g.init_states_from_predictions()
        g.clamp(2, np.array([10.0]))
        g.refresh_errors()
        np.testing.assert_array_equal(g.state_gradient(1), [12.0])

    def test_weight_gradient_hand_case(self):
        g = chain_1_1_1()
        g.forward_predictions(np.array([1.0]))
        g.init_states_from_predictions()
        g.clamp(2, np.array([10.0]))
        g.refresh_errors()
        dW, dB = g.weight_gradient(1)
        np.testing.assert_array_equal(dW, [[8.0]])
        np.testing.assert_array_equal(dB, [4.0])
        dW0, dB0 = g.weight_gradient(0)
        assert not dW0.any() and not dB0.any()

    def test_state_gradient_rejects_non_hidden(self, rng):
        g = build_mlp(0, (3, 2, 2))
        g.forward_predictions(rng.normal(size=3))
        g.init_states_from_predictions()
        with pytest.raises(IndexError):
            g.state_gradient(0)
        with pytest.raises(IndexError):
            g.state_gradient(g.output_index)

    def test_weight_gradient_zero_without_error(self, rng):
        g = build_mlp(0, (4, 3, 2))
        g.forward_predictions(rng.normal(size=4))
        g.init_states_from_predictions()
        for e in range(len(g.edges)):
            dW, dB = g.weight_gradient(e)
            assert not dW.any() and not dB.any()
