"""Segment-based video feature encoder, projection head, and inference path.

A clip is a stack of temporal segments. Each segment runs through a small
per-segment transformation (a two-layer MLP over precomputed frame
features, or a tiny two-layer 2D conv net over raw 32x32 frames with
global spatial pooling); the clip feature f_v is the uniform mean over
segments, and z_v = W_v f_v + b_v lives in the shared d-dimensional space.

Clip files use the PTGV1 layout: 5 magic bytes ``PTGV1``, then T_seg and F
as little-endian uint32, then T_seg * F little-endian float32 values.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError, ConfigError, DataError, DimensionError
from .layers import Linear, collect_buffers, collect_params
from .numerics import Tensor, conv2d, mean, no_grad, relu

BACKBONE_LINEAR = "linear"
BACKBONE_TINYCONV = "tinyconv"

PTGV_MAGIC = b"PTGV1"

N_LEVELS = 11


class LinearBackbone:
    """Per-segment MLP over precomputed frame features."""

    def __init__(self, feature_dim, hidden, out_dim, rng):
        self.fc1 = Linear(feature_dim, hidden, rng)
        self.fc2 = Linear(hidden, out_dim, rng)
        self.in_dim = feature_dim
        self.out_dim = out_dim

    def __call__(self, clips):
        """clips: [B, T_seg, F] -> per-segment features [B, T_seg, F']."""
        if clips.ndim != 3:
            raise DimensionError(f"linear backbone expects [B, T_seg, F], got {clips.shape}")
        return self.fc2(relu(self.fc1(clips)))

    def _layers(self, prefix):
        return {f"{prefix}.fc1": self.fc1, f"{prefix}.fc2": self.fc2}

    def named_params(self, prefix):
        return collect_params(self._layers(prefix))

    def named_buffers(self, prefix):
        return collect_buffers(self._layers(prefix))


class TinyConvBackbone:
    """Two 2D conv stages over raw frames, then global spatial mean."""

    def __init__(self, in_channels, out_dim, rng):
        self.conv1 = _conv2d_layer(in_channels, 8, 3, rng)
        self.conv2 = _conv2d_layer(8, 16, 3, rng)
        self.proj = Linear(16, out_dim, rng)
        self.in_dim = in_channels
        self.out_dim = out_dim

    def __call__(self, clips):
        """clips: [B, T_seg, H, W, C] -> [B, T_seg, F']."""
        if clips.ndim != 5:
            raise DimensionError(f"tinyconv backbone expects [B, T, H, W, C], got {clips.shape}")
        B, T, H, W, C = clips.shape
        x = clips.reshape(B * T, H, W, C).transpose(0, 3, 1, 2)
        h = relu(conv2d(x, self.conv1["w"], self.conv1["b"], stride=2, padding=1))
        h = relu(conv2d(h, self.conv2["w"], self.conv2["b"], stride=2, padding=1))
        pooled = mean(h, axis=(2, 3))  # global spatial pool -> [B*T, 16]
        return self.proj(pooled).reshape(B, T, self.out_dim)

    def named_params(self, prefix):
        out = {f"{prefix}.conv1.w": self.conv1["w"], f"{prefix}.conv1.b": self.conv1["b"],
               f"{prefix}.conv2.w": self.conv2["w"], f"{prefix}.conv2.b": self.conv2["b"]}
        out.update(self.proj.named_params(f"{prefix}.proj"))
        return out

    def named_buffers(self, prefix):
        return {}


def _conv2d_layer(c_in, c_out, k, rng):
    s = 1.0 / np.sqrt(c_in * k * k)
    return {"w": Tensor(rng.normal(0.0, s, size=(c_out, c_in, k, k)), requires_grad=True),
            "b": Tensor(np.zeros(c_out), requires_grad=True)}


class VideoBranch:
    """Backbone + segment pooling + projection into the shared space.

    Per-feature normalization statistics (train-fold derived) are buffers
    of this branch, so video-only checkpoints keep normalizing inputs
    exactly as the full model did.
    """

    def __init__(self, backbone, d, rng, norm_dim=None):
        self.backbone = backbone
        self.proj = Linear(backbone.out_dim, d, rng)
        norm_dim = norm_dim if norm_dim is not None else getattr(backbone, "in_dim", 1)
        self.norm_mean = np.zeros(norm_dim, dtype=np.float32)
        self.norm_std = np.ones(norm_dim, dtype=np.float32)

    def encode(self, clips):
        """Segment-pooled clip features f_v: mean over segments of phi(I_t)."""
        if clips.shape[1] < 1:
            raise DimensionError("empty clip: at least one temporal segment required")
        mean_c = Tensor._wrap(self.norm_mean.astype(clips.data.dtype))
        inv_c = Tensor._wrap((1.0 / self.norm_std).astype(clips.data.dtype))
        per_segment = self.backbone((clips - mean_c) * inv_c)
        return mean(per_segment, axis=1)

    def project(self, f_v):
        return self.proj(f_v)

    def __call__(self, clips):
        return self.project(self.encode(clips))

    def _layers(self, prefix):
        return {f"{prefix}.backbone": self.backbone, f"{prefix}.proj": self.proj}

    def named_params(self, prefix):
        return collect_params(self._layers(prefix))

    def named_buffers(self, prefix):
        out = collect_buffers(self._layers(prefix))
        out[f"{prefix}.norm.mean"] = self.norm_mean
        out[f"{prefix}.norm.std"] = self.norm_std
        return out


class ClassifierHead:
    """z_v -> logits over the 11 severity levels (one hidden relu layer)."""

    def __init__(self, d, rng):
        self.fc1 = Linear(d, d, rng)
        self.fc2 = Linear(d, N_LEVELS, rng)

    def __call__(self, z):
        return self.fc2(relu(self.fc1(z)))

    def _layers(self, prefix):
        return {f"{prefix}.fc1": self.fc1, f"{prefix}.fc2": self.fc2}

    def named_params(self, prefix):
        return collect_params(self._layers(prefix))

    def named_buffers(self, prefix):
        return collect_buffers(self._layers(prefix))


def make_backbone(kind, feature_dim, hidden, out_dim, rng, in_channels=3):
    if kind == BACKBONE_LINEAR:
        return LinearBackbone(feature_dim, hidden, out_dim, rng)
    if kind == BACKBONE_TINYCONV:
        return TinyConvBackbone(in_channels, out_dim, rng)
    raise ConfigError(f"unknown video backbone {kind!r}")


# -- clip file format -------------------------------------------------------


def save_clip(path, clip: np.ndarray):
    """Write a [T_seg, F] float array in the PTGV1 layout."""
    clip = np.asarray(clip, dtype="<f4")
    if clip.ndim != 2 or clip.shape[0] < 1:
        raise DataError(f"clip must be [T_seg >= 1, F], got shape {clip.shape}")
    with open(path, "wb") as fh:
        fh.write(PTGV_MAGIC)
        fh.write(struct.pack("<II", clip.shape[0], clip.shape[1]))
        fh.write(clip.tobytes())


def load_clip(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != PTGV_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {PTGV_MAGIC!r}")
        t_seg, f = struct.unpack("<II", fh.read(8))
        payload = fh.read(4 * t_seg * f)
        if len(payload) != 4 * t_seg * f:
            raise DataError(f"{path}: truncated payload")
        return np.frombuffer(payload, dtype="<f4").reshape(t_seg, f).copy()


# -- video-only inference ---------------------------------------------------


class InferenceEngine:
    """Video-path classifier over an immutable checkpoint.

    Only the ``video.*`` and ``classifier.*`` tensors are read out of the
    checkpoint; the names actually fetched are recorded so tests can
    assert that no sensor-branch weights are touched.
    """

    VIDEO_PREFIXES = ("video.", "classifier.")

    def __init__(self, checkpoint, config=None):
        from .config import RunConfig  # late import: avoid a cycle
        from .model import build_video_only

        cfg = config if config is not None else RunConfig.from_flat(checkpoint.config)
        self.branch, self.classifier = build_video_only(cfg)
        params = dict(self.branch.named_params("video"))
        params.update(self.classifier.named_params("classifier"))
        buffers = dict(self.branch.named_buffers("video"))
        buffers.update(self.classifier.named_buffers("classifier"))
        self.accessed_names = set()
        missing = []
        for name, tensor in params.items():
            try:
                values = checkpoint.get(name)
            except KeyError:
                missing.append(name)
                continue
            self.accessed_names.add(name)
            tensor.data = np.asarray(values, dtype=tensor.data.dtype).reshape(tensor.shape)
            tensor.requires_grad = False
        for name, buf in buffers.items():
            try:
                values = checkpoint.get(name)
            except KeyError:
                missing.append(name)
                continue
            self.accessed_names.add(name)
            buf[...] = np.asarray(values).reshape(buf.shape)
        if missing:
            raise CheckpointError(f"checkpoint lacks video weights: {sorted(missing)}")

    def logits(self, clip: np.ndarray) -> np.ndarray:
        clips = Tensor(np.asarray(clip)[None])
        with no_grad():
            z_v = self.branch(clips)
            return self.classifier(z_v).data[0]

    def infer_level(self, clip: np.ndarray):
        """Returns (level, logits); ties resolve to the lower class index."""
        logits = self.logits(clip)
        return int(np.argmax(logits)), logits


def infer_level(clip, checkpoint, config=None):
    """One-shot convenience wrapper around InferenceEngine."""
    return InferenceEngine(checkpoint, config=config).infer_level(clip)
