"""Tensor primitives over ``(batch, channels, length)`` arrays.

Every ``*_forward`` returns the output and the memory its ``*_backward``
needs; backward functions return the input gradient followed by any
parameter gradients.
"""

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from python_keed.errors import ShapeError

NORM_EPS = 1e-5


def conv1d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """Same-padded (zero) 1D convolution with an odd kernel.

    Args:
        x: Input of shape (B, C_in, L)
        weight: Kernel of shape (C_out, C_in, k)
        bias: Bias of shape (C_out,)

    Returns:
        Output of shape (B, C_out, L) and the backward memory.
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d input {x.shape} does not match kernel {weight.shape}")
    k = weight.shape[2]
    pad = k // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    windows = sliding_window_view(padded, k, axis=2)  # (B, C_in, L, k)
    out = np.tensordot(windows, weight, axes=([1, 3], [1, 2])).transpose(0, 2, 1) + bias[None, :, None]
    return out, (windows, weight, x.shape)


def conv1d_backward(dout: np.ndarray, memory: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    windows, weight, x_shape = memory
    k = weight.shape[2]
    pad = k // 2
    length = x_shape[2]
    dbias = dout.sum(axis=(0, 2))
    dweight = np.tensordot(dout, windows, axes=([0, 2], [0, 2]))
    dwindows = np.tensordot(dout, weight, axes=([1], [0]))  # (B, L, C_in, k)
    dpadded = np.zeros((x_shape[0], x_shape[1], length + 2 * pad), dtype=dout.dtype)
    for j in range(k):
        dpadded[:, :, j:j + length] += dwindows[:, :, :, j].transpose(0, 2, 1)
    dx = dpadded[:, :, pad:pad + length] if pad else dpadded
    return dx, dweight, dbias


def norm_forward(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """Per-sample, per-channel normalization over the length axis with affine output."""
    mean = x.mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.var(axis=2, keepdims=True) + NORM_EPS)
    xhat = (x - mean) * inv_std
    return scale[None, :, None] * xhat + shift[None, :, None], (xhat, inv_std, scale)


def norm_backward(dout: np.ndarray, memory: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, scale = memory
    n = xhat.shape[2]
    dscale = (dout * xhat).sum(axis=(0, 2))
    dshift = dout.sum(axis=(0, 2))
    dxhat = dout * scale[None, :, None]
    dx = inv_std / n * (n * dxhat - dxhat.sum(axis=2, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=2, keepdims=True))
    return dx, dscale, dshift


def relu_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, dout, 0.0)


def maxpool_forward(x: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """Stride-2 max pooling; ties resolve to the first element of each pair."""
    b, c, length = x.shape
    if length % 2:
        raise ShapeError(f"Max pooling needs an even length, got {length}")
    pairs = x.reshape(b, c, length // 2, 2)
    choice = pairs.argmax(axis=3)
    return np.take_along_axis(pairs, choice[..., None], axis=3)[..., 0], (choice, x.shape)


def maxpool_backward(dout: np.ndarray, memory: tuple) -> np.ndarray:
    choice, x_shape = memory
    dpairs = np.zeros(dout.shape + (2,), dtype=dout.dtype)
    np.put_along_axis(dpairs, choice[..., None], dout[..., None], axis=3)
    return dpairs.reshape(x_shape)


def upsample_forward(x: np.ndarray) -> np.ndarray:
    return np.repeat(x, 2, axis=2)


def upsample_backward(dout: np.ndarray) -> np.ndarray:
    b, c, length = dout.shape
    return dout.reshape(b, c, length // 2, 2).sum(axis=3)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)
