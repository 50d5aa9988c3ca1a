"""Neural-network operations on top of the tensor primitives.

Conventions, documented once and relied on everywhere:

* conv1d/conv2d use the cross-correlation convention (no kernel flip).
* mse(a, b) = mean over the leading (batch) axis of the squared L2 norm
  of the per-sample difference, i.e. sum((a-b)^2) / a.shape[0].
* cross_entropy reduces by mean over the batch.
* dropout is "inverted": activations are scaled by 1/(1-p) at train time
  so eval mode is the identity.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, _from_op, _lift, relu, tsum

__all__ = [
    "mean", "softmax", "conv1d", "conv2d", "maxpool1d", "batchnorm",
    "dropout", "layer_norm", "mse", "cross_entropy", "relu",
]

TRAIN = "train"
EVAL = "eval"


def _check_mode(mode):
    if mode not in (TRAIN, EVAL):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")


def mean(x, axis=None, keepdims=False):
    x = _lift(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for a in axes:
            n *= x.data.shape[a]
    if n == 0:
        raise DimensionError("mean over an empty axis")
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def softmax(x, axis=-1):
    """Row-stochastic softmax, stabilized by max subtraction."""
    x = _lift(x)
    if x.data.shape[axis] == 0:
        raise DimensionError(f"softmax over empty axis {axis} of shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _from_op(out, (x,), vjp)


def _conv_out_len(length, kernel, stride, padding):
    return (length + 2 * padding - kernel) // stride + 1


def conv1d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation along the last axis.

    x: [B, C_in, L], w: [C_out, C_in, K], b: [C_out] or None.
    Output length is floor((L + 2*padding - K)/stride) + 1.
    """
    x, w = _lift(x), _lift(w)
    if x.ndim != 3 or w.ndim != 3:
        raise DimensionError(f"conv1d expects x[B,C,L], w[O,C,K]; got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv1d channel mismatch: x {x.shape} vs w {w.shape}")
    if stride < 1:
        raise ContractError(f"conv1d stride must be >= 1, got {stride}")
    B, C, L = x.shape
    O, _, K = w.shape
    if K > L + 2 * padding:
        raise DimensionError(
            f"conv1d kernel {K} larger than padded input {L + 2 * padding} "
            f"(input length {L}, padding {padding})")
    L_out = _conv_out_len(L, K, stride, padding)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, K, axis=2)[:, :, ::stride]  # [B, C, L_out, K]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B, L_out, C * K)
    w2 = w.data.reshape(O, C * K)
    out = np.matmul(cols, w2.T).transpose(0, 2, 1)  # [B, O, L_out]

    parents = [x, w]
    if b is not None:
        b = _lift(b)
        if b.shape != (O,):
            raise DimensionError(f"conv1d bias shape {b.shape} != ({O},)")
        out = out + b.data[:, None]
        parents.append(b)

    def vjp(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 1))  # [B, L_out, O]
        gw = np.matmul(gt.reshape(-1, O).T, cols.reshape(-1, C * K)).reshape(O, C, K)
        gcols = np.matmul(gt, w2)  # [B, L_out, C*K]
        gwin = gcols.reshape(B, L_out, C, K).transpose(0, 2, 1, 3)
        gxp = np.zeros_like(xp)
        for k in range(K):
            gxp[:, :, k:k + stride * (L_out - 1) + 1:stride] += gwin[:, :, :, k]
        gx = gxp[:, :, padding:padding + L] if padding else gxp
        if b is not None:
            return gx, gw, g.sum(axis=(0, 2))
        return gx, gw

    return _from_op(out, tuple(parents), vjp)


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation over the trailing two axes.

    x: [B, C_in, H, W], w: [C_out, C_in, KH, KW].
    """
    x, w = _lift(x), _lift(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects x[B,C,H,W], w[O,C,KH,KW]; got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d channel mismatch: x {x.shape} vs w {w.shape}")
    B, C, H, W = x.shape
    O, _, KH, KW = w.shape
    if KH > H + 2 * padding or KW > W + 2 * padding:
        raise DimensionError(f"conv2d kernel ({KH},{KW}) larger than padded input")
    Ho = _conv_out_len(H, KH, stride, padding)
    Wo = _conv_out_len(W, KW, stride, padding)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (KH, KW), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: [B, C, Ho, Wo, KH, KW]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B, Ho * Wo, C * KH * KW)
    w2 = w.data.reshape(O, C * KH * KW)
    out = np.matmul(cols, w2.T).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    parents = [x, w]
    if b is not None:
        b = _lift(b)
        if b.shape != (O,):
            raise DimensionError(f"conv2d bias shape {b.shape} != ({O},)")
        out = out + b.data[:, None, None]
        parents.append(b)

    def vjp(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(B, Ho * Wo, O)
        gw = np.matmul(gt.reshape(-1, O).T, cols.reshape(-1, C * KH * KW)).reshape(O, C, KH, KW)
        gcols = np.matmul(gt, w2).reshape(B, Ho, Wo, C, KH, KW).transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros_like(xp)
        for kh in range(KH):
            for kw in range(KW):
                gxp[:, :,
                    kh:kh + stride * (Ho - 1) + 1:stride,
                    kw:kw + stride * (Wo - 1) + 1:stride] += gcols[:, :, :, :, kh, kw]
        gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        if b is not None:
            return gx, gw, g.sum(axis=(0, 2, 3))
        return gx, gw

    return _from_op(out, tuple(parents), vjp)


def maxpool1d(x, window, stride=None):
    """Max over sliding windows along the last axis; ties take the first index."""
    x = _lift(x)
    if x.ndim != 3:
        raise DimensionError(f"maxpool1d expects [B,C,L], got {x.shape}")
    stride = window if stride is None else stride
    B, C, L = x.shape
    if window > L:
        raise DimensionError(f"maxpool1d window {window} larger than input length {L}")
    if window < 1 or stride < 1:
        raise ContractError("maxpool1d window and stride must be >= 1")
    win = sliding_window_view(x.data, window, axis=2)[:, :, ::stride]  # [B,C,L_out,K]
    out = win.max(axis=-1)
    amax = win.argmax(axis=-1)
    L_out = out.shape[-1]

    def vjp(g):
        gwin = np.zeros(amax.shape + (window,), dtype=g.dtype)
        np.put_along_axis(gwin, amax[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        for k in range(window):
            gx[:, :, k:k + stride * (L_out - 1) + 1:stride] += gwin[..., k]
        return (gx,)

    return _from_op(out, (x,), vjp)


def batchnorm(x, gamma, beta, running_mean, running_var, eps=1e-5, momentum=0.1,
              mode=EVAL):
    """Per-channel batch normalization for [B, C] or [B, C, L] inputs.

    Train mode normalizes with current batch statistics (population
    variance) and updates the running buffers in place; eval mode uses the
    running statistics as constants.
    """
    _check_mode(mode)
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    if x.ndim not in (2, 3):
        raise DimensionError(f"batchnorm expects [B,C] or [B,C,L], got {x.shape}")
    axes = (0,) if x.ndim == 2 else (0, 2)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1)
    gshape = gamma.data.reshape(bshape)
    if mode == TRAIN:
        if x.shape[0] < 2:
            raise ContractError(f"batchnorm train mode needs batch >= 2, got {x.shape[0]}")
        mu = x.data.mean(axis=axes, keepdims=True)
        centered = x.data - mu
        var = (centered * centered).mean(axis=axes, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * var.reshape(-1)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv
        m = x.data.size // x.data.shape[1]

        def vjp(g):
            dxhat = g * gshape
            s1 = dxhat.sum(axis=axes, keepdims=True)
            s2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
            gx = (inv / m) * (m * dxhat - s1 - xhat * s2)
            return (gx.astype(x.data.dtype, copy=False),
                    (g * xhat).sum(axis=axes),
                    g.sum(axis=axes))

        out = (xhat * gshape + beta.data.reshape(bshape)).astype(x.data.dtype, copy=False)
        return _from_op(out, (x, gamma, beta), vjp)

    inv = 1.0 / np.sqrt(running_var.reshape(bshape) + eps)
    xhat = ((x.data - running_mean.reshape(bshape)) * inv).astype(x.data.dtype, copy=False)

    def vjp(g):
        return ((g * (gshape * inv)).astype(x.data.dtype, copy=False),
                (g * xhat).sum(axis=axes),
                g.sum(axis=axes))

    out = (xhat * gshape + beta.data.reshape(bshape)).astype(x.data.dtype, copy=False)
    return _from_op(out, (x, gamma, beta), vjp)


def dropout(x, p, mode, rng=None):
    """Inverted dropout. Identity in eval mode; mask drawn from ``rng`` in train."""
    _check_mode(mode)
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must satisfy 0 <= p < 1, got {p}")
    x = _lift(x)
    if mode == EVAL or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode needs an rng (determinism contract)")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return x * Tensor._wrap(mask)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then apply the affine pair."""
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    d = x.data.shape[-1]
    sum_axes = tuple(range(x.ndim - 1))

    def vjp(g):
        dxhat = g * gamma.data
        s1 = dxhat.sum(axis=-1, keepdims=True)
        s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
        gx = (inv / d) * (d * dxhat - s1 - xhat * s2)
        return (gx.astype(x.data.dtype, copy=False),
                (g * xhat).sum(axis=sum_axes),
                g.sum(axis=sum_axes))

    out = (xhat * gamma.data + beta.data).astype(x.data.dtype, copy=False)
    return _from_op(out, (x, gamma, beta), vjp)


def mse(a, b):
    """Mean over the leading axis of squared L2 norms: sum((a-b)^2)/a.shape[0]."""
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape:
        raise ContractError(f"mse operands differ in shape: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise ContractError("mse over an empty batch")
    d = a - b
    return tsum(d * d) * (1.0 / a.shape[0])


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under row softmax.

    logits: [B, C]; labels: int array [B] with values in [0, C).
    """
    logits = _lift(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [B,C] logits, got {logits.shape}")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != logits.shape[0]:
        raise DimensionError(f"labels shape {y.shape} incompatible with logits {logits.shape}")
    B, C = logits.shape
    if B == 0:
        raise ContractError("cross_entropy over an empty batch")
    if y.min() < 0 or y.max() >= C:
        raise ContractError(
            f"label out of range: got values in [{y.min()}, {y.max()}] for {C} classes")
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    se = e.sum(axis=1, keepdims=True)
    lse = (m + np.log(se)).reshape(-1)
    picked = z[np.arange(B), y]
    out = np.asarray((lse - picked).mean(), dtype=z.dtype)

    def vjp(g):
        p = e / se
        p[np.arange(B), y] -= 1.0
        return (g * p / B,)

    return _from_op(out, (logits,), vjp)
