"""
Backpropagation baseline over the same LayerGraph parameters and edges.
Loss is ½·‖label − output‖² (sum, not mean) so its gradient and the PC
free-energy weight gradient are the same object at the PC fixed point.
"""

import logging
from dataclasses import dataclass

import numpy as np

from pcnta.core.graph import LayerGraph, build_mlp
from pcnta.core.layers import Activation, EdgeCache
from pcnta.core.tensor_ops import Tensor
from pcnta.data.frames import FrameStream, one_hot
from pcnta.engine import pc_engine
from pcnta.engine.config import SampleResult, TrainConfig
from pcnta.engine.optim import Optimizer, flatten_params
from pcnta.errors import DimensionError, EmptyStreamError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BpGradients:
    """∂L/∂θ per edge, shaped like LayerGraph.params."""
    per_edge: tuple[tuple[Tensor, Tensor], ...]


def bp_forward(g: LayerGraph, x: Tensor) -> tuple[Tensor, list[EdgeCache]]:
    activations, caches = g.run_edges(x)
    return activations[-1], caches


def mse_loss(output: Tensor, label: Tensor) -> float:
    diff = label - output
    return 0.5 * float(np.sum(diff * diff))


def _check_label(g: LayerGraph, label: Tensor) -> None:
    expected = g.node_shapes[g.output_index]
    if label.shape != expected:
        raise DimensionError(f"label has shape {label.shape}, output node is {expected}")


def bp_gradients(g: LayerGraph, x: Tensor, label: Tensor) -> BpGradients:
    """Reverse-mode chain of edge adjoints for L = ½‖label − output‖²."""
    _check_label(g, label)
    output, caches = bp_forward(g, x)
    delta = output - label
    per_edge: list[tuple[Tensor, Tensor]] = []
    for i in range(len(g.edges) - 1, -1, -1):
        edge = g.edges[i]
        per_edge.append(edge.param_vjp(caches[i], delta))
        if i > 0:
            delta = edge.input_vjp(caches[i], delta)
    return BpGradients(per_edge=tuple(reversed(per_edge)))


def bp_train_step(
    g: LayerGraph,
    x: Tensor,
    label: Tensor,
    optimizer: Optimizer,
    update_count_threshold: float = 0.0,
) -> int:
    """
    θ ← θ − η_θ·∂L/∂θ through the optimizer.

    Returns:
        Count of scalar parameters whose delta exceeded the threshold
    """
    grads = bp_gradients(g, x, label)
    directions = [-tensor for pair in grads.per_edge for tensor in pair]
    return optimizer.apply(flatten_params(g.params), directions, update_count_threshold)


def bp_train_epoch(g: LayerGraph, stream: FrameStream, cfg: TrainConfig, optimizer: Optimizer) -> list[SampleResult]:
    """Online backprop over a stream; results carry the loss as final_vfe and zero inference iterations."""
    if not stream.frames:
        raise EmptyStreamError("cannot train on an empty stream")
    num_classes = g.node_shapes[g.output_index][0]
    results = []
    for frame in stream.frames:
        label = one_hot(frame.label, num_classes)
        output = g.predict(frame.image)
        updates = bp_train_step(g, frame.image, label, optimizer, cfg.update_count_threshold)
        results.append(SampleResult(
            iterations_used=0,
            final_vfe=mse_loss(output, label),
            nonzero_weight_updates=updates,
            predicted_class=pc_engine.predicted_class(output),
        ))
    return results


# ============================================================================
# PC ≈ backprop equivalence
# ============================================================================

@dataclass(frozen=True)
class EquivalenceReport:
    per_edge_cosine: tuple[float, ...]
    per_edge_rel_error: tuple[float, ...]
    iterations_used: int


def cosine_similarity(a: Tensor, b: Tensor) -> float:
    """Cosine of two flattened tensors; 1.0 when both vanish, 0.0 when only one does."""
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.ravel(), b.ravel()) / (na * nb))


def relative_error(actual: Tensor, expected: Tensor) -> float:
    scale = max(float(np.linalg.norm(actual)), float(np.linalg.norm(expected)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(actual - expected)) / scale


def compare_pc_to_bp(g: LayerGraph, x: Tensor, label: Tensor, cfg: TrainConfig) -> EquivalenceReport:
    """
    Cold-start PC inference on (x, label), then compare every edge's PC weight
    direction with the backprop descent direction −∂L/∂θ. Weights are not updated.
    """
    g.forward_predictions(x)
    g.init_states_from_predictions()
    pc_engine.clamp_output(g, label)
    iterations = pc_engine.run_inference(g, cfg)

    bp = bp_gradients(g, x, label)
    cosines, errors = [], []
    for i, (bp_w, bp_b) in enumerate(bp.per_edge):
        pc_w, pc_b = g.weight_gradient(i)
        pc_flat = np.concatenate([pc_w.ravel(), pc_b.ravel()])
        bp_flat = -np.concatenate([bp_w.ravel(), bp_b.ravel()])
        cosines.append(cosine_similarity(pc_flat, bp_flat))
        errors.append(relative_error(pc_flat, bp_flat))
    return EquivalenceReport(tuple(cosines), tuple(errors), iterations)


def pc_bp_equivalence_fixture(
    seed: int,
    activation: Activation = Activation.RELU,
    sizes: tuple[int, ...] = (10, 8, 6, 4),
    eta_v: float = 0.05,
    max_inference_iters: int = 200,
    convergence_tol: float = 0.0,
) -> EquivalenceReport:
    """Small MLP, random input and one-hot label, PC inference under fixed predictions vs backprop."""
    g = build_mlp(seed, sizes, activation)
    rng = np.random.default_rng(seed + 1)
    x = rng.uniform(-1.0, 1.0, size=sizes[0])
    label = one_hot(int(rng.integers(sizes[-1])), sizes[-1])
    cfg = TrainConfig(eta_v=eta_v, max_inference_iters=max_inference_iters, convergence_tol=convergence_tol)
    report = compare_pc_to_bp(g, x, label, cfg)
    logger.debug("equivalence fixture seed=%d activation=%s cosines=%s", seed, activation.value, report.per_edge_cosine)
    return report
