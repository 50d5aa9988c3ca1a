"""Modality-specific hierarchical 1D-CNN embedding extractors.

Each modality stream is encoded per node: windows of shape [B, T, N, 1]
are folded to [B*N, 1, T] and run through three conv stages, so no
information crosses the node axis here (the graph module owns inter-node
structure). Stage order is conv -> batchnorm -> relu -> maxpool, with
dropout applied after pooling in stage 1 only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .layers import BatchNorm1d, Conv1d, collect_buffers, collect_params
from .numerics import Tensor, dropout, maxpool1d, relu
from .numerics.ops import TRAIN

MODALITIES = ("eye", "head", "phy")

# node counts per modality stream
NODE_COUNTS = {"eye": 38, "head": 12, "phy": 3}

STAGES = 3


@dataclass
class EncoderConfig:
    modality: str
    channels: tuple = (16, 32, 32)
    kernels: tuple = (5, 3, 3)
    pools: tuple = (2, 2, 2)
    dropout: float = 0.1

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {self.modality!r}")
        for name in ("channels", "kernels", "pools"):
            vals = tuple(getattr(self, name))
            setattr(self, name, vals)
            if len(vals) != STAGES:
                raise ConfigError(f"{name} must list exactly {STAGES} stages, got {vals}")
            if any(v < 1 for v in vals):
                raise ConfigError(f"{name} entries must be positive, got {vals}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def nodes(self):
        return NODE_COUNTS[self.modality]

    @property
    def out_depth(self):
        return self.channels[-1]

    def paddings(self):
        # "same"-style padding keeps conv output length equal to its input
        return tuple(k // 2 for k in self.kernels)

    def min_window(self):
        """Smallest T the three conv/pool stages can consume."""
        t = 1
        for pool in reversed(self.pools):
            t = t * pool
        return t

    def out_length(self, window):
        t = window
        for k, pool, pad in zip(self.kernels, self.pools, self.paddings()):
            t = (t + 2 * pad - k) // 1 + 1
            if t < pool:
                raise ConfigError(
                    f"window {window} too short for {self.modality} encoder; "
                    f"needs at least {self.min_window()} after conv arithmetic")
            t = (t - pool) // pool + 1
        return t


def param_count(cfg: EncoderConfig) -> int:
    """Exact learnable scalar count: conv kernels + biases + batchnorm affine."""
    total = 0
    c_in = 1
    for c_out, k in zip(cfg.channels, cfg.kernels):
        total += stage_param_count(c_in, c_out, k)
        c_in = c_out
    return total


def stage_param_count(c_in: int, c_out: int, kernel: int) -> int:
    return c_out * c_in * kernel + c_out + 2 * c_out


class ModalityEncoder:
    """Three conv/bn/relu/pool stages applied along time, per node."""

    def __init__(self, cfg: EncoderConfig, rng):
        self.cfg = cfg
        self.convs = []
        self.bns = []
        c_in = 1
        for c_out, k, pad in zip(cfg.channels, cfg.kernels, cfg.paddings()):
            self.convs.append(Conv1d(c_in, c_out, k, rng, padding=pad))
            self.bns.append(BatchNorm1d(c_out))
            c_in = c_out

    def __call__(self, x, mode, rng=None):
        """x: Tensor [B, T, N, 1] -> Tensor [B, T', N, D]."""
        if x.ndim != 4 or x.shape[3] != 1:
            raise DimensionError(f"encoder expects [B, T, N, 1], got {x.shape}")
        B, T, N, _ = x.shape
        if N != self.cfg.nodes:
            raise DimensionError(
                f"{self.cfg.modality} encoder expects {self.cfg.nodes} nodes, got {N}")
        self.cfg.out_length(T)  # raises ConfigError when T is too short
        h = x.transpose(0, 2, 3, 1).reshape(B * N, 1, T)
        for stage, (conv, bn, pool) in enumerate(zip(self.convs, self.bns, self.cfg.pools)):
            h = relu(bn(conv(h), mode=mode))
            if pool > 1:
                h = maxpool1d(h, pool)
            if stage == 0 and self.cfg.dropout > 0:
                h = dropout(h, self.cfg.dropout, mode, rng=rng)
        t_out = h.shape[2]
        return h.reshape(B, N, self.cfg.out_depth, t_out).transpose(0, 3, 1, 2)

    def _layers(self, prefix):
        out = {}
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns), start=1):
            out[f"{prefix}.stage{i}.conv"] = conv
            out[f"{prefix}.stage{i}.bn"] = bn
        return out

    def named_params(self, prefix):
        return collect_params(self._layers(prefix))

    def named_buffers(self, prefix):
        return collect_buffers(self._layers(prefix))


def encode_modality(x, encoder: ModalityEncoder, mode=TRAIN, rng=None):
    """Functional entry point; see ModalityEncoder.__call__."""
    return encoder(x, mode=mode, rng=rng)


def default_config(modality: str) -> EncoderConfig:
    if modality == "phy":
        # short 1 Hz windows: pooling would collapse them
        return EncoderConfig(modality, pools=(1, 1, 1))
    return EncoderConfig(modality)
