"""
Predictive coding engine.
Handles the per-frame loop: FORWARD → (COLD START | RESTORE) → CLAMP → INFER → UPDATE → SNAPSHOT

The first frame of a stream always cold-starts from the predictions. Later
frames either restore the hidden states saved after the previous frame
(temporal amortization, PCN-TA) or cold-start again (baseline PCN).
"""

import logging

import numpy as np

from pcnta.core.graph import LayerGraph, StateSnapshot
from pcnta.core.tensor_ops import Tensor
from pcnta.data.frames import FrameStream, one_hot
from pcnta.engine.config import SampleResult, TrainConfig
from pcnta.engine.optim import Optimizer, build_optimizer, flatten_params
from pcnta.errors import DimensionError, EmptyStreamError

logger = logging.getLogger(__name__)


def predicted_class(output: Tensor) -> int:
    """Argmax with ties going to the lowest index."""
    return int(np.argmax(output))


def clamp_output(g: LayerGraph, label: Tensor) -> None:
    """Clamp the output state to the label for the whole inference phase: eps_L = L − v_hat_L."""
    out = g.output_index
    if label.shape != g.node_shapes[out]:
        raise DimensionError(f"label has shape {label.shape}, output node is {g.node_shapes[out]}")
    g.clamp(out, label)
    g.refresh_errors()


def inference_step(g: LayerGraph, eta_v: float) -> float:
    """
    One simultaneous state update over all hidden nodes.

    Returns:
        max over hidden nodes of ‖state gradient‖∞, measured before the step
    """
    gradients = [(i, g.state_gradient(i)) for i in g.hidden_indices]
    max_norm = 0.0
    for i, grad in gradients:
        g.nodes[i].v = g.nodes[i].v + eta_v * grad
        if grad.size:
            max_norm = max(max_norm, float(np.max(np.abs(grad))))
    g.refresh_errors()
    return max_norm


def run_inference(g: LayerGraph, cfg: TrainConfig, trace: list[float] | None = None) -> int:
    """
    Iterate inference_step until the gradient max-norm drops below the
    tolerance or the budget is spent.

    Returns:
        Number of steps taken
    """
    for iteration in range(1, cfg.max_inference_iters + 1):
        max_norm = inference_step(g, cfg.eta_v)
        if trace is not None:
            trace.append(g.vfe())
        if max_norm < cfg.convergence_tol:
            return iteration
    return cfg.max_inference_iters


def weight_update(g: LayerGraph, cfg: TrainConfig, optimizer: Optimizer | None = None) -> int:
    """
    Apply θ ← θ + η_θ·weight_gradient on every edge through the optimizer.

    Returns:
        Count of scalar parameters whose delta exceeded cfg.update_count_threshold
    """
    if optimizer is None:
        optimizer = build_optimizer(cfg.optimizer, cfg.eta_theta)
    directions = [tensor for i in range(len(g.edges)) for tensor in g.weight_gradient(i)]
    return optimizer.apply(flatten_params(g.params), directions, cfg.update_count_threshold)


def _finish_sample(
    g: LayerGraph,
    label: Tensor,
    cfg: TrainConfig,
    optimizer: Optimizer | None,
) -> tuple[SampleResult, StateSnapshot]:
    predicted = predicted_class(g.nodes[g.output_index].v_hat)
    clamp_output(g, label)
    trace: list[float] | None = [] if cfg.record_vfe else None
    iterations = run_inference(g, cfg, trace)
    final_vfe = g.vfe()
    updates = weight_update(g, cfg, optimizer)
    result = SampleResult(
        iterations_used=iterations,
        final_vfe=final_vfe,
        nonzero_weight_updates=updates,
        predicted_class=predicted,
        vfe_trace=tuple(trace) if trace is not None else (),
    )
    return result, g.snapshot()


def train_first_sample(
    g: LayerGraph,
    x: Tensor,
    label: Tensor,
    cfg: TrainConfig,
    optimizer: Optimizer | None = None,
) -> tuple[SampleResult, StateSnapshot]:
    """First frame of a stream: predictions → cold start → clamp → infer → update → snapshot."""
    g.forward_predictions(x)
    g.init_states_from_predictions()
    return _finish_sample(g, label, cfg, optimizer)


def train_subsequent_sample(
    g: LayerGraph,
    x: Tensor,
    label: Tensor,
    prev: StateSnapshot,
    cfg: TrainConfig,
    optimizer: Optimizer | None = None,
) -> tuple[SampleResult, StateSnapshot]:
    """Later frames: fresh predictions, then warm start from prev (amortize) or cold start."""
    g.forward_predictions(x)
    if cfg.amortize:
        g.restore_states(prev)
        g.refresh_errors()
    else:
        g.init_states_from_predictions()
    return _finish_sample(g, label, cfg, optimizer)


def train_epoch(
    g: LayerGraph,
    stream: FrameStream,
    cfg: TrainConfig,
    optimizer: Optimizer | None = None,
) -> list[SampleResult]:
    """One online pass: one inference phase and one weight update per frame, snapshots threaded through."""
    if not stream.frames:
        raise EmptyStreamError("cannot train on an empty stream")
    if optimizer is None:
        optimizer = build_optimizer(cfg.optimizer, cfg.eta_theta)

    num_classes = g.node_shapes[g.output_index][0]
    results: list[SampleResult] = []
    snapshot: StateSnapshot | None = None
    for position, frame in enumerate(stream.frames):
        label = one_hot(frame.label, num_classes)
        if snapshot is None:
            result, snapshot = train_first_sample(g, frame.image, label, cfg, optimizer)
        else:
            result, snapshot = train_subsequent_sample(g, frame.image, label, snapshot, cfg, optimizer)
        results.append(result)
        logger.debug(
            "frame %d obj=%d view=%d iters=%d vfe=%.6g updates=%d",
            position, frame.object_id, frame.view_angle_index,
            result.iterations_used, result.final_vfe, result.nonzero_weight_updates,
        )
    g.last_snapshot = snapshot
    return results


def evaluate(g: LayerGraph, testset: FrameStream) -> float:
    """Fraction of frames whose output argmax matches the label. No buffers or weights change."""
    if not testset.frames:
        raise EmptyStreamError("cannot evaluate on an empty test set")
    correct = sum(predicted_class(g.predict(frame.image)) == frame.label for frame in testset.frames)
    return correct / len(testset.frames)
