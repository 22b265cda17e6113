"""
Finite-difference gradient checks and the PC ≈ backprop equivalence fixtures.

Every analytic gradient is compared with central differences (step 1e-5,
64-bit) on small randomized shapes. Coordinates whose ±step perturbation
changes an activation pattern (ReLU mask or pool winner) sit next to a kink
and are skipped. All primitives are reached through their modules so a
patched primitive is what gets checked.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from pcnta.core import tensor_ops as ops
from pcnta.core.graph import LayerGraph, build_conv_architecture, build_mlp
from pcnta.core.layers import Activation
from pcnta.core.tensor_ops import Tensor
from pcnta.data.frames import one_hot
from pcnta.engine import bp_engine, pc_engine

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
REL_TOL = 1e-6
# gradients smaller than this are compared on an absolute scale
GRAD_FLOOR = 1e-3
MAX_COORDS = 40

LINEAR_COSINE_TOL = 1e-9
RELU_COSINE_MIN = 0.99
EQUIVALENCE_ITERS = 200


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    max_rel_error: float
    checked: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= REL_TOL


@dataclass(frozen=True)
class EquivalenceCheck:
    name: str
    report: bp_engine.EquivalenceReport
    passed: bool
    criterion: str


@dataclass
class GradcheckReport:
    checks: list[CheckResult] = field(default_factory=list)
    equivalence: list[EquivalenceCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and all(e.passed for e in self.equivalence)

    def failures(self) -> list[str]:
        failed = [
            f"{c.suite}/{c.name}: max rel error {c.max_rel_error:.3e} over {c.checked} coords"
            for c in self.checks if not c.passed
        ]
        failed += [
            f"equivalence/{e.name}: cosines {', '.join(f'{v:.12f}' for v in e.report.per_edge_cosine)} ({e.criterion})"
            for e in self.equivalence if not e.passed
        ]
        return failed


# ============================================================================
# Central differences
# ============================================================================

def _rel_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric), GRAD_FLOOR)
    return abs(analytic - numeric) / scale


def _sample_indices(shape: tuple[int, ...], rng: np.random.Generator, limit: int) -> list[tuple[int, ...]]:
    size = int(np.prod(shape))
    if size <= limit:
        flat = np.arange(size)
    else:
        flat = np.sort(rng.choice(size, size=limit, replace=False))
    return [tuple(int(i) for i in np.unravel_index(int(k), shape)) for k in flat]


def check_gradient(
    suite: str,
    name: str,
    analytic: Tensor,
    target: Tensor,
    objective: Callable[[], float | None],
    rng: np.random.Generator,
    limit: int = MAX_COORDS,
) -> CheckResult:
    """
    Compare analytic ∂objective/∂target with central differences.

    Args:
        analytic: gradient of the objective, shaped like target
        target: array the objective reads; perturbed in place and restored
        objective: scalar value, or None when the perturbation crossed a kink
    """
    worst = 0.0
    checked = skipped = 0
    for index in _sample_indices(target.shape, rng, limit):
        original = float(target[index])
        target[index] = original + FD_STEP
        f_plus = objective()
        target[index] = original - FD_STEP
        f_minus = objective()
        target[index] = original
        if f_plus is None or f_minus is None:
            skipped += 1
            continue
        numeric = (f_plus - f_minus) / (2.0 * FD_STEP)
        worst = max(worst, _rel_error(float(analytic[index]), numeric))
        checked += 1
    result = CheckResult(suite, name, worst, checked, skipped)
    logger.debug("%s/%s: max rel %.3e checked=%d skipped=%d", suite, name, worst, checked, skipped)
    return result


# ============================================================================
# Tensor core
# ============================================================================

def check_tensor_ops(rng: np.random.Generator) -> list[CheckResult]:
    suite = "tensor-core"
    results = []

    x = rng.uniform(-1.0, 1.0, 5)
    W = rng.uniform(-1.0, 1.0, (3, 5))
    b = rng.uniform(-1.0, 1.0, 3)
    u = rng.uniform(-1.0, 1.0, 3)
    dX, dW, dB = ops.dense_vjp(x, W, u)

    def dense_objective() -> float:
        return float(np.sum(u * ops.dense_forward(x, W, b)))

    results.append(check_gradient(suite, "dense dX", dX, x, dense_objective, rng))
    results.append(check_gradient(suite, "dense dW", dW, W, dense_objective, rng))
    results.append(check_gradient(suite, "dense dB", dB, b, dense_objective, rng))

    x = rng.uniform(-1.0, 1.0, (2, 7, 7))
    K = rng.uniform(-1.0, 1.0, (3, 2, 3, 3))
    b = rng.uniform(-1.0, 1.0, 3)
    u = rng.uniform(-1.0, 1.0, (3, 5, 5))
    dX, dK, dB = ops.conv2d_vjp(x, K, u)

    def conv_objective() -> float:
        return float(np.sum(u * ops.conv2d_forward(x, K, b)))

    results.append(check_gradient(suite, "conv2d dX", dX, x, conv_objective, rng))
    results.append(check_gradient(suite, "conv2d dK", dK, K, conv_objective, rng))
    results.append(check_gradient(suite, "conv2d dB", dB, b, conv_objective, rng))

    x = rng.uniform(-1.0, 1.0, (2, 4, 4))
    u = rng.uniform(-1.0, 1.0, (2, 2, 2))
    _, winners = ops.maxpool_forward(x, 2)
    dX = ops.maxpool_vjp(winners, u)

    def pool_objective() -> float | None:
        y, index = ops.maxpool_forward(x, 2)
        if not np.array_equal(index.flat_index, winners.flat_index):
            return None
        return float(np.sum(u * y))

    results.append(check_gradient(suite, "maxpool dX", dX, x, pool_objective, rng))

    x = rng.uniform(-1.0, 1.0, 12)
    u = rng.uniform(-1.0, 1.0, 12)
    mask = ops.relu_deriv(x)
    dX = u * mask

    def relu_objective() -> float | None:
        if not np.array_equal(ops.relu_deriv(x), mask):
            return None
        return float(np.sum(u * ops.relu(x)))

    results.append(check_gradient(suite, "relu dX", dX, x, relu_objective, rng))
    return results


# ============================================================================
# Predictive coding graph
# ============================================================================

def _small_graphs(seed: int) -> list[tuple[str, LayerGraph]]:
    return [
        ("mlp", build_mlp(seed, (6, 5, 4, 3), Activation.RELU)),
        ("conv", build_conv_architecture(seed, input_size=8, conv_filters=2, kernel=3, hidden=(5, 4), num_classes=3)),
    ]


def _settle(g: LayerGraph, rng: np.random.Generator, steps: int = 3, eta_v: float = 0.05) -> None:
    """Forward, cold start, clamp a random label and take a few inference steps so every error is nonzero."""
    num_classes = g.node_shapes[g.output_index][0]
    g.forward_predictions(rng.uniform(-1.0, 1.0, g.input_shape))
    g.init_states_from_predictions()
    pc_engine.clamp_output(g, one_hot(int(rng.integers(num_classes)), num_classes))
    for _ in range(steps):
        pc_engine.inference_step(g, eta_v)


def check_state_gradients(g: LayerGraph, name: str, rng: np.random.Generator) -> list[CheckResult]:
    """
    state_gradient(i) is the descent direction of the local quadratic
    ½‖v − v_hat_i‖² + ½‖eps_{i+1} − (f_i(v) − f_i(v_i))‖².
    """
    results = []
    for i in g.hidden_indices:
        edge, node, upper = g.edges[i], g.nodes[i], g.nodes[i + 1]
        base_pattern = edge.pattern(g.caches[i])
        target = node.v.copy()
        y_ref, ref_cache = edge.forward(target)
        if edge.pattern(ref_cache) != base_pattern:
            logger.debug("%s node %d: state left the prediction-phase linear piece, skipped", name, i)
            continue
        analytic = -g.state_gradient(i)

        def objective(edge=edge, node=node, upper=upper, target=target, y_ref=y_ref, base_pattern=base_pattern):
            y, cache = edge.forward(target)
            if edge.pattern(cache) != base_pattern:
                return None
            own = target - node.v_hat
            above = upper.eps - (y - y_ref)
            return 0.5 * float(np.sum(own * own) + np.sum(above * above))

        results.append(check_gradient("pc-graph", f"{name} state node {i}", analytic, target, objective, rng))
    return results


def check_weight_gradients(g: LayerGraph, name: str, rng: np.random.Generator) -> list[CheckResult]:
    """weight_gradient(e) is the descent direction of ½‖v_{e+1} − f_e(v_hat_e; θ)‖²."""
    results = []
    for e, edge in enumerate(g.edges):
        base_pattern = edge.pattern(g.caches[e])
        x_in = g.nodes[e].v_hat
        v_out = g.nodes[e + 1].v
        dW, dB = g.weight_gradient(e)

        def objective(edge=edge, x_in=x_in, v_out=v_out, base_pattern=base_pattern):
            y, cache = edge.forward(x_in)
            if edge.pattern(cache) != base_pattern:
                return None
            r = v_out - y
            return 0.5 * float(np.sum(r * r))

        results.append(check_gradient("pc-graph", f"{name} weight edge {e}", -dW, edge.weight, objective, rng))
        results.append(check_gradient("pc-graph", f"{name} bias edge {e}", -dB, edge.bias, objective, rng))
    return results


# ============================================================================
# Backprop
# ============================================================================

def check_bp_gradients(seed: int, rng: np.random.Generator) -> list[CheckResult]:
    """bp_gradients against the loss on the reduced convolutional architecture (1×16×16, 4 filters)."""
    g = build_conv_architecture(seed, input_size=16, conv_filters=4, kernel=5, hidden=(12, 8), num_classes=5)
    x = rng.uniform(0.0, 1.0, g.input_shape)
    label = one_hot(int(rng.integers(5)), 5)
    grads = bp_engine.bp_gradients(g, x, label)
    _, caches = g.run_edges(x)
    base_patterns = [edge.pattern(cache) for edge, cache in zip(g.edges, caches)]

    def objective() -> float | None:
        activations, now = g.run_edges(x)
        if [edge.pattern(cache) for edge, cache in zip(g.edges, now)] != base_patterns:
            return None
        return bp_engine.mse_loss(activations[-1], label)

    results = []
    for e, (dW, dB) in enumerate(grads.per_edge):
        results.append(check_gradient("bp-baseline", f"conv16 weight edge {e}", dW, g.edges[e].weight, objective, rng))
        results.append(check_gradient("bp-baseline", f"conv16 bias edge {e}", dB, g.edges[e].bias, objective, rng))
    return results


# ============================================================================
# Equivalence
# ============================================================================

def check_equivalence(seed: int) -> list[EquivalenceCheck]:
    linear = bp_engine.pc_bp_equivalence_fixture(
        seed, Activation.LINEAR, max_inference_iters=EQUIVALENCE_ITERS,
    )
    relu = bp_engine.pc_bp_equivalence_fixture(
        seed, Activation.RELU, max_inference_iters=EQUIVALENCE_ITERS,
    )
    return [
        EquivalenceCheck(
            "linear mlp", linear,
            passed=all(abs(c - 1.0) <= LINEAR_COSINE_TOL for c in linear.per_edge_cosine),
            criterion=f"|cos - 1| <= {LINEAR_COSINE_TOL:g}",
        ),
        EquivalenceCheck(
            "relu mlp", relu,
            passed=all(c >= RELU_COSINE_MIN for c in relu.per_edge_cosine),
            criterion=f"cos >= {RELU_COSINE_MIN}",
        ),
    ]


def run_gradcheck(seed: int = 0) -> GradcheckReport:
    """Every suite, seeded so the same seed checks the same coordinates."""
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    report.checks.extend(check_tensor_ops(rng))
    for name, g in _small_graphs(seed):
        _settle(g, rng)
        report.checks.extend(check_state_gradients(g, name, rng))
        report.checks.extend(check_weight_gradients(g, name, rng))
    report.checks.extend(check_bp_gradients(seed, rng))
    report.equivalence.extend(check_equivalence(seed))
    return report


def format_report(report: GradcheckReport) -> str:
    lines = [f"{'check':<40} {'max rel err':>12} {'coords':>7} {'skipped':>8}  status"]
    for c in report.checks:
        lines.append(
            f"{c.suite + '/' + c.name:<40} {c.max_rel_error:>12.3e} {c.checked:>7} {c.skipped:>8}  "
            f"{'ok' if c.passed else 'FAIL'}"
        )
    lines.append("")
    lines.append(f"{'fixture':<12} {'edge':>4} {'cosine':>18} {'rel err':>12}  status")
    for e in report.equivalence:
        for edge, (cosine, rel) in enumerate(zip(e.report.per_edge_cosine, e.report.per_edge_rel_error)):
            lines.append(f"{e.name:<12} {edge:>4} {cosine:>18.12f} {rel:>12.3e}  {'ok' if e.passed else 'FAIL'}")
    return "\n".join(lines)
