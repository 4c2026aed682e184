"""Differentiable operations used by the encoder/decoder/discriminator stacks.

Convolutions are cross-correlations (no kernel flip) evaluated through an
im2col/col2im pair so the heavy lifting lands in BLAS. Each operation builds
a graph node with a hand-written backward rule; see ``autodiff.Tensor``.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ShapeError

# ----------------------------------------------------------------------
# im2col / col2im
# ----------------------------------------------------------------------


def _pad2d(x, pad):
    if pad == 0:
        return x
    b, c, h, w = x.shape
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    out[:, :, pad : pad + h, pad : pad + w] = x
    return out


def _im2col(x_padded, k, stride, oh, ow):
    # (B, C, Hp, Wp) -> (C*k*k, B*oh*ow); batch folded so matmuls are single GEMMs
    b, c = x_padded.shape[:2]
    xt = x_padded.transpose(1, 0, 2, 3)
    cols = np.empty((c, k, k, b, oh, ow), dtype=x_padded.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(c * k * k, b * oh * ow)


def _col2im(cols, b, c, h, w, k, stride, pad, oh, ow):
    # adjoint of _im2col: scatter-add columns back onto the padded image
    out = np.zeros((c, b, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(c, k, k, b, oh, ow)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[
                :, i, j
            ]
    out = out.transpose(1, 0, 2, 3)
    if pad:
        out = out[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(out)


def _to_channel_major(x):
    # (B, C, H, W) -> (C, B*H*W)
    b, c, h, w = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(c, b * h * w)


def _from_channel_major(flat, b, c, h, w):
    # (C, B*H*W) -> (B, C, H, W)
    return np.ascontiguousarray(flat.reshape(c, b, h, w).transpose(1, 0, 2, 3))


def _conv_geometry(h, w, k, stride, pad):
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if h + 2 * pad < k or w + 2 * pad < k:
        raise ShapeError(
            f"conv window {k}x{k} does not fit input {h}x{w} with pad {pad}"
        )
    return oh, ow


# ----------------------------------------------------------------------
# Convolutions
# ----------------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Strided 2d cross-correlation. ``x`` is NCHW, ``w`` is (out, in, k, k)."""
    b, c, h, wid = _expect_ndim(x, 4, "conv2d input")
    o, ci, k, k2 = _expect_ndim(w, 4, "conv2d weight")
    if k != k2:
        raise ShapeError(f"conv2d kernel must be square, got {k}x{k2}")
    if ci != c:
        raise ShapeError(f"conv2d channels disagree: input has {c}, weight expects {ci}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({o},)")
    oh, ow = _conv_geometry(h, wid, k, stride, pad)

    cols = _im2col(_pad2d(x.data, pad), k, stride, oh, ow)
    w_mat = w.data.reshape(o, c * k * k)
    out = _from_channel_major(w_mat @ cols, b, o, oh, ow)
    if bias is not None:
        out += bias.data[None, :, None, None]

    parents = (x, w) if bias is None else (x, w, bias)
    node = Tensor(out, parents=parents)

    def backward(g):
        g_mat = _to_channel_major(g)
        dx = dw = db = None
        if x.requires_grad:
            dx = _col2im(w_mat.T @ g_mat, b, c, h, wid, k, stride, pad, oh, ow)
        if w.requires_grad:
            dw = (g_mat @ cols.T).reshape(w.shape)
        if bias is not None and bias.requires_grad:
            db = g.sum(axis=(0, 2, 3))
        return (dx, dw) if bias is None else (dx, dw, db)

    node._backward_fn = backward
    return node


def conv_transpose2d(
    x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0
) -> Tensor:
    """Adjoint of ``conv2d``. ``x`` is NCHW, ``w`` is (in, out, k, k).

    The same weight array drives both directions:
    ``<conv2d(a, w), y> == <a, conv_transpose2d(y, w)>``.
    """
    b, c, h, wid = _expect_ndim(x, 4, "conv_transpose2d input")
    ci, co, k, k2 = _expect_ndim(w, 4, "conv_transpose2d weight")
    if k != k2:
        raise ShapeError(f"conv_transpose2d kernel must be square, got {k}x{k2}")
    if ci != c:
        raise ShapeError(
            f"conv_transpose2d channels disagree: input has {c}, weight expects {ci}"
        )
    if bias is not None and bias.shape != (co,):
        raise ShapeError(f"conv_transpose2d bias shape {bias.shape} != ({co},)")
    oh = (h - 1) * stride - 2 * pad + k
    ow = (wid - 1) * stride - 2 * pad + k
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv_transpose2d output would be empty: {oh}x{ow}")

    x_flat = _to_channel_major(x.data)
    w_mat = w.data.reshape(ci, co * k * k)
    cols = w_mat.T @ x_flat
    out = _col2im(cols, b, co, oh, ow, k, stride, pad, h, wid)
    if bias is not None:
        out += bias.data[None, :, None, None]

    parents = (x, w) if bias is None else (x, w, bias)
    node = Tensor(out, parents=parents)

    def backward(g):
        dx = dw = db = None
        gcols = None
        if x.requires_grad or w.requires_grad:
            gcols = _im2col(_pad2d(g, pad), k, stride, h, wid)
        if x.requires_grad:
            dx = _from_channel_major(w_mat @ gcols, b, c, h, wid)
        if w.requires_grad:
            dw = (gcols @ x_flat.T).T.reshape(w.shape)
        if bias is not None and bias.requires_grad:
            db = g.sum(axis=(0, 2, 3))
        return (dx, dw) if bias is None else (dx, dw, db)

    node._backward_fn = backward
    return node


# ----------------------------------------------------------------------
# Batch normalization
# ----------------------------------------------------------------------


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over batch and spatial extents.

    Train mode normalizes with batch statistics and folds them into the
    running buffers (in place, the one mutation in the op set); eval mode
    reads the running buffers. Train mode requires at least two samples.
    """
    b, c, h, w = _expect_ndim(x, 4, "batchnorm2d input")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm2d affine shapes {gamma.shape}/{beta.shape} != ({c},)")
    if train and b < 2:
        raise ShapeError("batchnorm2d train mode needs a batch of at least 2 samples")

    if train:
        m = b * h * w
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1.0))
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]
    node = Tensor(out, parents=(x, gamma, beta))

    def backward(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        dbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        dx = None
        if x.requires_grad:
            dxhat = g * gamma.data[None, :, None, None]
            if train:
                m = b * h * w
                s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
                dx = (inv_std[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
            else:
                dx = dxhat * inv_std[None, :, None, None]
        return dx, dgamma, dbeta

    node._backward_fn = backward
    return node


# ----------------------------------------------------------------------
# Activations
# ----------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0), parents=(x,))
    out._backward_fn = lambda g: (g * (x.data > 0),)
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = Tensor(np.where(x.data > 0, x.data, x.data * slope), parents=(x,))
    out._backward_fn = lambda g: (g * np.where(x.data > 0, 1.0, slope).astype(x.dtype),)
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = Tensor(t, parents=(x,))
    out._backward_fn = lambda g: (g * (1.0 - t * t),)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(s, parents=(x,))
    out._backward_fn = lambda g: (g * s * (1.0 - s),)
    return out


_ACTIVATIONS = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def activation(x: Tensor, kind: str) -> Tensor:
    """Dispatch by name; ``leaky_relu`` uses the fixed 0.2 slope."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ShapeError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")
    return fn(x)


# ----------------------------------------------------------------------
# Affine head
# ----------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (B, N) times w (M, N) transposed, plus bias (M,)."""
    b, n = _expect_ndim(x, 2, "linear input")
    m, n2 = _expect_ndim(w, 2, "linear weight")
    if n != n2:
        raise ShapeError(f"linear inner extents disagree: input {n}, weight {n2}")
    if bias is not None and bias.shape != (m,):
        raise ShapeError(f"linear bias shape {bias.shape} != ({m},)")

    out = x.data @ w.data.T
    if bias is not None:
        out = out + bias.data[None, :]
    parents = (x, w) if bias is None else (x, w, bias)
    node = Tensor(out, parents=parents)

    def backward(g):
        dx = g @ w.data if x.requires_grad else None
        dw = g.T @ x.data if w.requires_grad else None
        if bias is None:
            return dx, dw
        db = g.sum(axis=0) if bias.requires_grad else None
        return dx, dw, db

    node._backward_fn = backward
    return node


def _expect_ndim(t: Tensor, ndim: int, what: str):
    if t.data.ndim != ndim:
        raise ShapeError(f"{what} must have {ndim} axes, got shape {t.shape}")
    return t.shape
