"""
Layer specifications and the fused trainable edges built from them.

A chain of LayerSpecs is grouped into edges. Each edge is one trainable layer
(Conv2D or Dense) with its activation, an optional Flatten in front of a Dense
and any MaxPool layers right after a Conv2D. Error nodes exist only between
edges, so Conv+ReLU+Pool is one edge and Flatten belongs to the next Dense.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from pcnta.core import tensor_ops as ops
from pcnta.core.tensor_ops import DTYPE, PoolIndex, Tensor
from pcnta.errors import DimensionError, GraphBuildError


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel: int


@dataclass(frozen=True)
class MaxPool:
    size: int = 2


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_features: int


LayerKind = Conv2D | MaxPool | Flatten | Dense


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    activation: Activation = Activation.LINEAR

    def __post_init__(self) -> None:
        if isinstance(self.kind, (MaxPool, Flatten)) and self.activation is not Activation.LINEAR:
            raise GraphBuildError(f"{type(self.kind).__name__} carries no activation, got {self.activation.value}")

    @property
    def trainable(self) -> bool:
        return isinstance(self.kind, (Conv2D, Dense))


# ============================================================================
# Edge grouping and shape propagation
# ============================================================================

@dataclass(frozen=True)
class EdgePlan:
    """Shape-checked description of one fused edge, before parameters exist."""
    layer_index: int
    kind: Conv2D | Dense
    activation: Activation
    flatten: bool
    pools: tuple[int, ...]
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if isinstance(self.kind, Conv2D):
            return (self.kind.out_channels, self.in_shape[0], self.kind.kernel, self.kind.kernel)
        return (self.kind.out_features, int(np.prod(self.in_shape)))

    @property
    def bias_shape(self) -> tuple[int, ...]:
        return (self.weight_shape[0],)

    @property
    def fan_in(self) -> int:
        return int(np.prod(self.weight_shape[1:]))


def _fail(index: int, spec: LayerSpec, reason: str) -> GraphBuildError:
    return GraphBuildError(f"layer {index} ({type(spec.kind).__name__}): {reason}")


def plan_edges(specs: list[LayerSpec], input_shape: tuple[int, ...]) -> list[EdgePlan]:
    """
    Group specs into edges and propagate shapes.

    Raises:
        GraphBuildError naming the offending layer
    """
    if not specs:
        raise GraphBuildError("architecture has no layers")

    plans: list[EdgePlan] = []
    shape = tuple(int(d) for d in input_shape)
    pending_flatten = False
    current: dict | None = None

    def close_current() -> None:
        nonlocal current
        if current is not None:
            plans.append(EdgePlan(**current))
            current = None

    for index, spec in enumerate(specs):
        kind = spec.kind
        if isinstance(kind, Flatten):
            close_current()
            if pending_flatten:
                raise _fail(index, spec, "two Flatten layers in a row")
            pending_flatten = True
            continue

        if isinstance(kind, MaxPool):
            if current is None or not isinstance(current["kind"], Conv2D):
                raise _fail(index, spec, "MaxPool must follow a Conv2D")
            if kind.size < 1:
                raise _fail(index, spec, f"pool size must be positive, got {kind.size}")
            channels, height, width = shape
            if height % kind.size or width % kind.size:
                raise _fail(index, spec, f"spatial dims {height}×{width} not divisible by {kind.size}")
            shape = (channels, height // kind.size, width // kind.size)
            current["pools"] = current["pools"] + (kind.size,)
            current["out_shape"] = shape
            continue

        close_current()
        in_shape = shape
        if isinstance(kind, Conv2D):
            if pending_flatten:
                raise _fail(index, spec, "Flatten must be followed by Dense")
            if len(shape) != 3:
                raise _fail(index, spec, f"needs a C×H×W input, got {shape}")
            if kind.out_channels < 1 or kind.kernel < 1:
                raise _fail(index, spec, "out_channels and kernel must be positive")
            _, height, width = shape
            if height < kind.kernel or width < kind.kernel:
                raise _fail(index, spec, f"kernel {kind.kernel} larger than input {height}×{width}")
            shape = (kind.out_channels, height - kind.kernel + 1, width - kind.kernel + 1)
        else:
            if len(shape) != 1 and not pending_flatten:
                raise _fail(index, spec, f"Dense on a {len(shape)}-D node needs a Flatten first")
            if kind.out_features < 1:
                raise _fail(index, spec, "out_features must be positive")
            shape = (kind.out_features,)

        current = {
            "layer_index": index,
            "kind": kind,
            "activation": spec.activation,
            "flatten": pending_flatten,
            "pools": (),
            "in_shape": in_shape,
            "out_shape": shape,
        }
        pending_flatten = False

    if pending_flatten:
        raise _fail(len(specs) - 1, specs[-1], "Flatten cannot be the last layer")
    close_current()
    return plans


def infer_node_shapes(specs: list[LayerSpec], input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Shapes of every state node, input node first."""
    plans = plan_edges(specs, input_shape)
    return [tuple(input_shape)] + [plan.out_shape for plan in plans]


def count_parameters(specs: list[LayerSpec], input_shape: tuple[int, ...]) -> int:
    """Number of scalar parameters without allocating them."""
    total = 0
    for plan in plan_edges(specs, input_shape):
        total += int(np.prod(plan.weight_shape)) + plan.bias_shape[0]
    return total


# ============================================================================
# Edge
# ============================================================================

@dataclass
class EdgeCache:
    """Linearization point of one edge: its input and the frozen masks/argmaxes."""
    x: Tensor
    relu_mask: Tensor | None = None
    pool_indices: list[PoolIndex] = field(default_factory=list)


class Edge:
    """One trainable edge: [Flatten] → Conv2D|Dense → activation → [MaxPool...]."""

    def __init__(self, plan: EdgePlan, weight: Tensor, bias: Tensor) -> None:
        if weight.shape != plan.weight_shape or bias.shape != plan.bias_shape:
            raise DimensionError(
                f"edge at layer {plan.layer_index}: parameters {weight.shape}/{bias.shape} "
                f"do not match {plan.weight_shape}/{plan.bias_shape}"
            )
        self.plan = plan
        self.weight = weight
        self.bias = bias

    @property
    def is_conv(self) -> bool:
        return isinstance(self.plan.kind, Conv2D)

    def forward(self, x: Tensor) -> tuple[Tensor, EdgeCache]:
        if x.shape != self.plan.in_shape:
            raise DimensionError(f"edge at layer {self.plan.layer_index}: input {x.shape}, expected {self.plan.in_shape}")
        h = x.reshape(-1) if self.plan.flatten else x
        if self.is_conv:
            z = ops.conv2d_forward(h, self.weight, self.bias)
        else:
            z = ops.dense_forward(h, self.weight, self.bias)

        cache = EdgeCache(x=h)
        if self.plan.activation is Activation.RELU:
            cache.relu_mask = ops.relu_deriv(z)
            z = ops.relu(z)
        for size in self.plan.pools:
            z, index = ops.maxpool_forward(z, size)
            cache.pool_indices.append(index)
        return z, cache

    def _pre_activation_adjoint(self, cache: EdgeCache, upstream: Tensor) -> Tensor:
        if upstream.shape != self.plan.out_shape:
            raise DimensionError(
                f"edge at layer {self.plan.layer_index}: upstream {upstream.shape}, expected {self.plan.out_shape}"
            )
        g = upstream
        for index in reversed(cache.pool_indices):
            g = ops.maxpool_vjp(index, g)
        if cache.relu_mask is not None:
            g = g * cache.relu_mask
        return g

    def input_vjp(self, cache: EdgeCache, upstream: Tensor) -> Tensor:
        """Jᵀ·upstream with respect to the edge input, at the cached linearization point."""
        g = self._pre_activation_adjoint(cache, upstream)
        if self.is_conv:
            dX = ops.conv2d_input_vjp(cache.x.shape, self.weight, g)
        else:
            dX, _, _ = ops.dense_vjp(cache.x, self.weight, g)
        return dX.reshape(self.plan.in_shape)

    def param_vjp(self, cache: EdgeCache, upstream: Tensor) -> tuple[Tensor, Tensor]:
        """Jᵀ·upstream with respect to (weight, bias)."""
        g = self._pre_activation_adjoint(cache, upstream)
        if self.is_conv:
            return ops.conv2d_param_vjp(cache.x, self.plan.kind.kernel, g)
        _, dW, dB = ops.dense_vjp(cache.x, self.weight, g)
        return dW, dB

    def pattern(self, cache: EdgeCache) -> tuple:
        """Activation pattern (ReLU mask, pool winners); equal patterns mean the same linear piece."""
        mask = None if cache.relu_mask is None else cache.relu_mask.astype(bool).tobytes()
        return (mask, tuple(index.flat_index.tobytes() for index in cache.pool_indices))


def init_parameters(plan: EdgePlan, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    """Uniform in ±1/√fan_in for weights and bias."""
    bound = 1.0 / np.sqrt(plan.fan_in)
    weight = rng.uniform(-bound, bound, size=plan.weight_shape).astype(DTYPE)
    bias = rng.uniform(-bound, bound, size=plan.bias_shape).astype(DTYPE)
    return weight, bias
