"""
The layered computation graph.

Node 0 is the input; node i+1 is the output of edge i; the last node is the
output. Every node carries three buffers: the state v, the prediction v_hat
computed by the feedforward pass, and the error eps = v − v_hat. Predictions
and the edge linearization points (ReLU masks, pool winners) are frozen from
forward_predictions until the next call, so every adjoint during inference is
evaluated at the prediction-phase point.
"""

from dataclasses import dataclass

import numpy as np

from pcnta.core.layers import (
    Activation,
    Conv2D,
    Dense,
    Edge,
    EdgeCache,
    Flatten,
    LayerSpec,
    MaxPool,
    init_parameters,
    plan_edges,
)
from pcnta.core.tensor_ops import DTYPE, Tensor
from pcnta.errors import DimensionError, PcntaError, SnapshotError

COIL20_INPUT_SHAPE = (1, 128, 128)


@dataclass
class Node:
    v: Tensor
    v_hat: Tensor
    eps: Tensor


@dataclass(frozen=True)
class StateSnapshot:
    """Hidden-node states carried from one frame to the next (input and output excluded)."""
    values: tuple[Tensor, ...]

    @classmethod
    def of(cls, arrays) -> "StateSnapshot":
        frozen = []
        for array in arrays:
            copy = np.array(array, dtype=DTYPE, copy=True)
            copy.setflags(write=False)
            frozen.append(copy)
        return cls(values=tuple(frozen))

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [value.shape for value in self.values]


class LayerGraph:
    """Ordered chain of trainable edges with per-node v / v_hat / eps buffers."""

    def __init__(self, specs: list[LayerSpec], input_shape: tuple[int, ...], seed: int) -> None:
        self.specs = list(specs)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)

        plans = plan_edges(self.specs, self.input_shape)
        rng = np.random.default_rng(self.seed)
        self.edges: list[Edge] = []
        for plan in plans:
            weight, bias = init_parameters(plan, rng)
            self.edges.append(Edge(plan, weight, bias))

        self.node_shapes: list[tuple[int, ...]] = [self.input_shape] + [p.out_shape for p in plans]
        self.nodes: list[Node] = [
            Node(v=np.zeros(s, DTYPE), v_hat=np.zeros(s, DTYPE), eps=np.zeros(s, DTYPE))
            for s in self.node_shapes
        ]
        self._caches: list[EdgeCache] | None = None
        # hidden states after the most recent training frame, for checkpoints
        self.last_snapshot: StateSnapshot | None = None

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    @property
    def output_index(self) -> int:
        return len(self.nodes) - 1

    @property
    def hidden_indices(self) -> range:
        return range(1, self.output_index)

    @property
    def params(self) -> list[tuple[Tensor, Tensor]]:
        return [(edge.weight, edge.bias) for edge in self.edges]

    @property
    def parameter_count(self) -> int:
        return sum(edge.weight.size + edge.bias.size for edge in self.edges)

    @property
    def caches(self) -> list[EdgeCache]:
        if self._caches is None:
            raise PcntaError("forward_predictions has not run on this graph")
        return self._caches

    def hidden_shapes(self) -> list[tuple[int, ...]]:
        return [self.node_shapes[i] for i in self.hidden_indices]

    def _check_input(self, x: Tensor) -> None:
        if x.shape != self.input_shape:
            raise DimensionError(f"input has shape {x.shape}, graph expects {self.input_shape}")

    # ------------------------------------------------------------------
    # Feedforward
    # ------------------------------------------------------------------

    def run_edges(self, x: Tensor) -> tuple[list[Tensor], list[EdgeCache]]:
        """Plain feedforward pass; returns every node activation and the edge caches."""
        self._check_input(x)
        activations = [np.array(x, dtype=DTYPE, copy=True)]
        caches = []
        for edge in self.edges:
            y, cache = edge.forward(activations[-1])
            activations.append(y)
            caches.append(cache)
        return activations, caches

    def predict(self, x: Tensor) -> Tensor:
        """Output activation for x; leaves every buffer untouched."""
        activations, _ = self.run_edges(x)
        return activations[-1]

    def forward_predictions(self, x: Tensor) -> None:
        """Clamp the input node to x and compute frozen predictions v_hat for every node."""
        activations, caches = self.run_edges(x)
        input_node = self.nodes[0]
        input_node.v = activations[0].copy()
        input_node.v_hat = activations[0].copy()
        input_node.eps = np.zeros(self.input_shape, DTYPE)
        for node, value in zip(self.nodes[1:], activations[1:]):
            node.v_hat = value
        self._caches = caches

    # ------------------------------------------------------------------
    # States
    # ------------------------------------------------------------------

    def init_states_from_predictions(self) -> None:
        """Cold start: v := v_hat at every non-input node."""
        if self._caches is None:
            raise PcntaError("forward_predictions has not run on this graph")
        for node in self.nodes[1:]:
            node.v = node.v_hat.copy()
        self.refresh_errors()

    def snapshot(self) -> StateSnapshot:
        return StateSnapshot.of(self.nodes[i].v for i in self.hidden_indices)

    def restore_states(self, snapshot: StateSnapshot) -> None:
        """Overwrite hidden states with a snapshot; predictions stay as they are."""
        expected = self.hidden_shapes()
        if snapshot.shapes != expected:
            raise SnapshotError(f"snapshot shapes {snapshot.shapes} do not match hidden nodes {expected}")
        for i, value in zip(self.hidden_indices, snapshot.values):
            self.nodes[i].v = np.array(value, dtype=DTYPE, copy=True)

    def refresh_errors(self) -> None:
        for node in self.nodes[1:]:
            node.eps = node.v - node.v_hat

    def clamp(self, index: int, value: Tensor) -> None:
        node = self.nodes[index]
        if value.shape != node.v.shape:
            raise DimensionError(f"node {index} has shape {node.v.shape}, got {value.shape}")
        node.v = np.array(value, dtype=DTYPE, copy=True)

    # ------------------------------------------------------------------
    # Energy and gradients
    # ------------------------------------------------------------------

    def vfe(self) -> float:
        """½·Σ‖eps‖² over all non-input nodes, output included."""
        return 0.5 * float(sum(np.sum(node.eps * node.eps) for node in self.nodes[1:]))

    def state_gradient(self, i: int) -> Tensor:
        """
        Descent direction for hidden node i: −eps_i + J_iᵀ·eps_{i+1}.
        J_i is the Jacobian of edge i at the frozen prediction-phase point.
        """
        if i not in self.hidden_indices:
            raise IndexError(f"node {i} is not a hidden node (valid: 1..{self.output_index - 1})")
        edge = self.edges[i]
        return -self.nodes[i].eps + edge.input_vjp(self.caches[i], self.nodes[i + 1].eps)

    def weight_gradient(self, edge_index: int) -> tuple[Tensor, Tensor]:
        """Descent direction (dW, dB) for edge parameters: J_θᵀ·eps at the edge's output node."""
        if not 0 <= edge_index < len(self.edges):
            raise IndexError(f"edge {edge_index} out of range (0..{len(self.edges) - 1})")
        edge = self.edges[edge_index]
        return edge.param_vjp(self.caches[edge_index], self.nodes[edge_index + 1].eps)


# ============================================================================
# Builders
# ============================================================================

def build_graph(specs: list[LayerSpec], seed: int, input_shape: tuple[int, ...] = COIL20_INPUT_SHAPE) -> LayerGraph:
    """Shape-check specs, seed-initialize parameters, zero every buffer."""
    return LayerGraph(specs, input_shape, seed)


def conv_architecture_specs(
    conv_filters: int = 124,
    kernel: int = 5,
    pool: int = 2,
    hidden: tuple[int, ...] = (200, 128),
    num_classes: int = 20,
) -> list[LayerSpec]:
    """
    Conv+ReLU → MaxPool → Flatten → Dense+ReLU ... → penultimate Dense (linear) → output Dense (linear).
    Every hidden Dense but the last is ReLU; the penultimate and output layers are linear.
    """
    specs = [
        LayerSpec(Conv2D(conv_filters, kernel), Activation.RELU),
        LayerSpec(MaxPool(pool)),
        LayerSpec(Flatten()),
    ]
    for position, width in enumerate(hidden):
        last = position == len(hidden) - 1
        specs.append(LayerSpec(Dense(width), Activation.LINEAR if last else Activation.RELU))
    specs.append(LayerSpec(Dense(num_classes)))
    return specs


def coil20_architecture_specs() -> list[LayerSpec]:
    return conv_architecture_specs()


def build_conv_architecture(
    seed: int,
    input_size: int = 128,
    conv_filters: int = 124,
    kernel: int = 5,
    hidden: tuple[int, ...] = (200, 128),
    num_classes: int = 20,
) -> LayerGraph:
    specs = conv_architecture_specs(conv_filters, kernel, 2, tuple(hidden), num_classes)
    return build_graph(specs, seed, (1, input_size, input_size))


def build_coil20_architecture(seed: int) -> LayerGraph:
    """Conv(124, k=5)+ReLU → Pool 2 → Flatten → FC 200+ReLU → FC 128 → FC 20 on 1×128×128."""
    return build_graph(coil20_architecture_specs(), seed, COIL20_INPUT_SHAPE)


def build_mlp(seed: int, sizes: tuple[int, ...], activation: Activation = Activation.RELU) -> LayerGraph:
    """Dense chain sizes[0] → ... → sizes[-1]; hidden edges use activation, the output edge is linear."""
    specs = []
    for position, width in enumerate(sizes[1:]):
        last = position == len(sizes) - 2
        specs.append(LayerSpec(Dense(width), Activation.LINEAR if last else activation))
    return build_graph(specs, seed, (sizes[0],))
