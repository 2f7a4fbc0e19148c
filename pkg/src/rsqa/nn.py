"""Dense-tensor compute core: forward and exact backward for every layer.

Layers operate on plain numpy arrays and preserve the input dtype, so the
same code runs in float32 for training and float64 for gradient checking.
Convolutions are im2col + GEMM; each forward returns an opaque cache that
its backward consumes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Parameter:
    """A trainable array with a same-shape gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def zero_grad(self):
        self.grad[...] = 0.0


def _same_pad(size: int, stride: int, kernel: int) -> tuple[int, int]:
    out = -(-size // stride)  # ceil division
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                   stride_f: int = 1):
    """3x3 cross-correlation with "same" zero padding on both axes.

    x: (N, C_in, T, F); w: (C_out, C_in, 3, 3); b: (C_out,).
    Time stride is always 1; the frequency stride is 1 or 3, giving
    F_out = ceil(F / stride_f).
    """
    if x.ndim != 4 or w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ValueError("shape mismatch: expected 4-D input and 3x3 kernels")
    n, c_in, t, f = x.shape
    c_out = w.shape[0]
    if w.shape[1] != c_in or b.shape != (c_out,):
        raise ValueError("shape mismatch between input, weights, and bias")
    pt0, pt1 = _same_pad(t, 1, 3)
    pf0, pf1 = _same_pad(f, stride_f, 3)
    xp = np.pad(x, ((0, 0), (0, 0), (pt0, pt1), (pf0, pf1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, :, ::stride_f]
    t_out, f_out = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * t_out * f_out, c_in * 9)
    y = cols @ w.reshape(c_out, -1).T + b
    y = y.reshape(n, t_out, f_out, c_out).transpose(0, 3, 1, 2)
    cache = (x.shape, w, stride_f, (pt0, pf0), cols)
    return y, cache


def conv2d_backward(dy: np.ndarray, cache):
    """Exact gradients w.r.t. input, weights, and bias.

    The input gradient is the transposed convolution: the output gradient
    is dilated along frequency by the stride, zero-padded by kernel-1, and
    correlated with the 180-degree-rotated kernel.
    """
    x_shape, w, stride_f, (pt0, pf0), cols = cache
    n, c_in, t, f = x_shape
    c_out = w.shape[0]
    _, _, t_out, f_out = dy.shape

    db = dy.sum(axis=(0, 2, 3))
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, c_out)
    dw = (dy_mat.T @ cols).reshape(w.shape)

    if stride_f > 1:
        dil = np.zeros((n, c_out, t_out, (f_out - 1) * stride_f + 1), dtype=dy.dtype)
        dil[:, :, :, ::stride_f] = dy
    else:
        dil = dy
    dil = np.pad(dil, ((0, 0), (0, 0), (2, 2), (2, 2)))
    win = sliding_window_view(dil, (3, 3), axis=(2, 3))
    tp, fp = win.shape[2], win.shape[3]
    cols_b = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * tp * fp, c_out * 9)
    w_rot = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c_in, -1)
    dxp = (cols_b @ w_rot.T).reshape(n, tp, fp, c_in).transpose(0, 3, 1, 2)
    dx = dxp[:, :, pt0 : pt0 + t, pf0 : pf0 + f]
    return np.ascontiguousarray(dx), dw, db


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # subgradient 0 at exactly 0
    return dy * mask


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = x w^T + b for x of shape (batch, n_in), w of shape (n_out, n_in)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError("shape mismatch in dense layer")
    return x @ w.T + b, x


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def dropout_forward(x: np.ndarray, p: float, train: bool,
                    rng: np.random.Generator | None = None):
    """Inverted dropout: survivors are scaled by 1/(1-p) during training."""
    if not (0.0 <= p < 1.0):
        raise ValueError("dropout probability must be in [0, 1)")
    if not train or p == 0.0:
        return x, None
    mask = rng.random(x.shape) >= p
    return x * mask * (1.0 / (1.0 - p)), mask


def dropout_backward(dy: np.ndarray, mask, p: float) -> np.ndarray:
    if mask is None:
        return dy
    return dy * mask * (1.0 / (1.0 - p))


def mean_pool(frame_scores: np.ndarray) -> float:
    """Pool a (T,) or (T, 1) frame-score vector to one utterance score."""
    if frame_scores.size < 1:
        raise ValueError("cannot pool an empty score vector")
    return float(frame_scores.mean())


def masked_mean_forward(scores: np.ndarray, mask: np.ndarray):
    """Per-row mean of (N, T) scores over positions where mask is 1."""
    counts = mask.sum(axis=1)
    if (counts < 1).any():
        raise ValueError("each row needs at least one unmasked frame")
    return (scores * mask).sum(axis=1) / counts, (mask, counts)


def masked_mean_backward(dy: np.ndarray, cache) -> np.ndarray:
    mask, counts = cache
    return (dy / counts)[:, None] * mask
