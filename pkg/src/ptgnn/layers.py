"""Small parameterized building blocks shared by the model branches.

Each layer owns its tensors and exposes them through ``named_params`` /
``named_buffers`` so the model can assemble a flat, uniquely named
tensor directory for checkpointing.
"""

from __future__ import annotations

import numpy as np

from .numerics import Tensor, batchnorm, conv1d, layer_norm
from .numerics.ops import EVAL


class Linear:
    """Affine map on the last axis: y = x @ w + b."""

    def __init__(self, in_dim, out_dim, rng, scale=None, bias=True):
        s = scale if scale is not None else (1.0 / np.sqrt(in_dim))
        self.w = Tensor(rng.normal(0.0, s, size=(in_dim, out_dim)), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None

    def __call__(self, x):
        y = x @ self.w
        if self.b is not None:
            y = y + self.b
        return y

    def named_params(self, prefix):
        out = {f"{prefix}.w": self.w}
        if self.b is not None:
            out[f"{prefix}.b"] = self.b
        return out

    def named_buffers(self, prefix):
        return {}


class Conv1d:
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0):
        s = 1.0 / np.sqrt(in_ch * kernel)
        self.w = Tensor(rng.normal(0.0, s, size=(out_ch, in_ch, kernel)), requires_grad=True)
        self.b = Tensor(np.zeros(out_ch), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)

    def named_params(self, prefix):
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}

    def named_buffers(self, prefix):
        return {}


class BatchNorm1d:
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        from .numerics import default_dtype
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=default_dtype())
        self.running_var = np.ones(channels, dtype=default_dtype())
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x, mode=EVAL):
        return batchnorm(x, self.gamma, self.beta, self.running_mean,
                         self.running_var, eps=self.eps, momentum=self.momentum,
                         mode=mode)

    def named_params(self, prefix):
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}

    def named_buffers(self, prefix):
        return {f"{prefix}.running_mean": self.running_mean,
                f"{prefix}.running_var": self.running_var}


class LayerNorm:
    def __init__(self, dim, eps=1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta, eps=self.eps)

    def named_params(self, prefix):
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}

    def named_buffers(self, prefix):
        return {}


def collect_params(layers: dict) -> dict:
    """Merge named_params from a {prefix: layer} mapping; names must be unique."""
    out = {}
    for prefix, layer in layers.items():
        for name, p in layer.named_params(prefix).items():
            if name in out:
                raise ValueError(f"duplicate parameter name {name!r}")
            out[name] = p
    return out


def collect_buffers(layers: dict) -> dict:
    out = {}
    for prefix, layer in layers.items():
        for name, b in layer.named_buffers(prefix).items():
            if name in out:
                raise ValueError(f"duplicate buffer name {name!r}")
            out[name] = b
    return out
