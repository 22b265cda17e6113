"""
Tensor core.
Forward/adjoint pairs for every layer primitive shared by predictive coding
inference and backprop. Tensors are float64 numpy arrays; all shapes are
single-sample (no batch axis).
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from pcnta.errors import DimensionError

Tensor = NDArray[np.float64]

DTYPE = np.float64


def _require_shape(name: str, array: np.ndarray, shape: tuple[int, ...]) -> None:
    if array.shape != shape:
        raise DimensionError(f"{name} has shape {array.shape}, expected {shape}")


# ============================================================================
# Dense
# ============================================================================

def dense_forward(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """
    Fully connected edge: W·x + b.

    Args:
        x: input vector [in]
        W: weights [out × in]
        b: bias [out]
    """
    if W.ndim != 2:
        raise DimensionError(f"W must be 2-D, got shape {W.shape}")
    out_features, in_features = W.shape
    _require_shape("x", x, (in_features,))
    _require_shape("b", b, (out_features,))
    return W @ x + b


def dense_vjp(x: Tensor, W: Tensor, upstream: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """
    Adjoint of dense_forward.

    Returns:
        (dX, dW, dB) = (Wᵀ·upstream, upstream ⊗ x, upstream)
    """
    if W.ndim != 2:
        raise DimensionError(f"W must be 2-D, got shape {W.shape}")
    out_features, in_features = W.shape
    _require_shape("x", x, (in_features,))
    _require_shape("upstream", upstream, (out_features,))
    return W.T @ upstream, np.outer(upstream, x), upstream.copy()


# ============================================================================
# Convolution (valid, stride 1)
# ============================================================================

def _check_conv_operands(x: Tensor, K: Tensor) -> tuple[int, int, int, int]:
    if x.ndim != 3:
        raise DimensionError(f"x must be C_in×H×W, got shape {x.shape}")
    if K.ndim != 4 or K.shape[2] != K.shape[3]:
        raise DimensionError(f"K must be C_out×C_in×k×k, got shape {K.shape}")
    c_in, height, width = x.shape
    c_out, k_in, k, _ = K.shape
    if k_in != c_in:
        raise DimensionError(f"K expects {k_in} input channels, x has {c_in}")
    if height < k or width < k:
        raise DimensionError(f"kernel {k}×{k} larger than input {height}×{width}")
    return c_out, k, height - k + 1, width - k + 1


def conv2d_forward(x: Tensor, K: Tensor, b: Tensor) -> Tensor:
    """
    Valid stride-1 cross-correlation plus per-channel bias.

    Args:
        x: input [C_in × H × W]
        K: kernels [C_out × C_in × k × k]
        b: bias [C_out]

    Returns:
        [C_out × (H−k+1) × (W−k+1)]
    """
    c_out, k, _, _ = _check_conv_operands(x, K)
    _require_shape("b", b, (c_out,))
    # windows: C_in × H' × W' × k × k
    windows = sliding_window_view(x, (k, k), axis=(1, 2))
    y = np.tensordot(K, windows, axes=([1, 2, 3], [0, 3, 4]))
    return y + b[:, None, None]


def conv2d_input_vjp(x_shape: tuple[int, ...], K: Tensor, upstream: Tensor) -> Tensor:
    """Adjoint of conv2d_forward with respect to its input."""
    c_out, _, k, _ = K.shape
    _, height, width = x_shape
    _require_shape("upstream", upstream, (c_out, height - k + 1, width - k + 1))
    padded = np.pad(upstream, ((0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))
    flipped = K[:, :, ::-1, ::-1]
    return np.tensordot(flipped, windows, axes=([0, 2, 3], [0, 3, 4]))


def conv2d_param_vjp(x: Tensor, k: int, upstream: Tensor) -> tuple[Tensor, Tensor]:
    """Adjoint of conv2d_forward with respect to kernels and bias."""
    _, height, width = x.shape
    if upstream.ndim != 3 or upstream.shape[1:] != (height - k + 1, width - k + 1):
        raise DimensionError(
            f"upstream shape {upstream.shape} does not match a {k}×{k} valid convolution of {x.shape}"
        )
    windows = sliding_window_view(x, (k, k), axis=(1, 2))
    dK = np.tensordot(upstream, windows, axes=([1, 2], [1, 2]))
    dB = upstream.sum(axis=(1, 2))
    return dK, dB


def conv2d_vjp(x: Tensor, K: Tensor, upstream: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """
    Adjoint of conv2d_forward.

    Returns:
        (dX, dK, dB)
    """
    c_out, k, out_h, out_w = _check_conv_operands(x, K)
    _require_shape("upstream", upstream, (c_out, out_h, out_w))
    dX = conv2d_input_vjp(x.shape, K, upstream)
    dK, dB = conv2d_param_vjp(x, k, upstream)
    return dX, dK, dB


# ============================================================================
# Max pooling
# ============================================================================

@dataclass(frozen=True)
class PoolIndex:
    """Winning input position of every pooling window, as flat indices into the input."""
    input_shape: tuple[int, int, int]
    flat_index: NDArray[np.int64]


def maxpool_forward(x: Tensor, size: int = 2) -> tuple[Tensor, PoolIndex]:
    """
    Non-overlapping size×size max pooling.
    Ties go to the row-major lowest position in the window.
    """
    if x.ndim != 3:
        raise DimensionError(f"x must be C×H×W, got shape {x.shape}")
    channels, height, width = x.shape
    if height % size or width % size:
        raise DimensionError(f"spatial dims {height}×{width} not divisible by pool size {size}")
    out_h, out_w = height // size, width // size

    blocks = x.reshape(channels, out_h, size, out_w, size).transpose(0, 1, 3, 2, 4)
    blocks = blocks.reshape(channels, out_h, out_w, size * size)
    winner = np.argmax(blocks, axis=-1)
    y = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    di, dj = np.divmod(winner, size)
    rows = np.arange(out_h)[None, :, None] * size + di
    cols = np.arange(out_w)[None, None, :] * size + dj
    chans = np.arange(channels)[:, None, None]
    flat = (chans * height + rows) * width + cols
    return y, PoolIndex(input_shape=(channels, height, width), flat_index=flat.astype(np.int64))


def maxpool_vjp(argmax: PoolIndex, upstream: Tensor) -> Tensor:
    """Route each upstream element to its window's winning position."""
    _require_shape("upstream", upstream, argmax.flat_index.shape)
    dX = np.zeros(int(np.prod(argmax.input_shape)), dtype=DTYPE)
    dX[argmax.flat_index.ravel()] = upstream.ravel()
    return dX.reshape(argmax.input_shape)


# ============================================================================
# Activation
# ============================================================================

def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_deriv(x: Tensor) -> Tensor:
    """1 where x > 0, else 0 (the derivative at exactly 0 is 0)."""
    return (x > 0.0).astype(DTYPE)
