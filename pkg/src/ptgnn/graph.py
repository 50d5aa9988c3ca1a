"""Per-modality graph convolution over a learnable adjacency.

The adjacency is parameterized as A = (raw + raw^T) / 2, so the effective
matrix is symmetric by construction at every optimizer step (exactly, in
floating point: elementwise addition commutes). Two propagation layers
share the same A; node features mix as relu(A E W1), then A (.) W2, per
time step. Temporal average pooling aggregates the per-step outputs.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .layers import Linear
from .numerics import Tensor, mean, relu, transpose


class AdjacencyParam:
    """Learnable N x N graph structure with structural symmetry."""

    def __init__(self, raw: Tensor, normalized: bool = False):
        self.raw = raw
        self.normalized = normalized

    @property
    def n_nodes(self):
        return self.raw.shape[0]

    def effective(self):
        """Symmetrized (and optionally degree-normalized) adjacency."""
        a = (self.raw + transpose(self.raw)) * 0.5
        if self.normalized:
            # D^-1/2 A D^-1/2 with degrees from absolute weights; the outer
            # product of scales is built first so the result stays symmetric
            # bit for bit
            deg = np.abs(a.data).sum(axis=1) + 1e-8
            inv = (deg ** -0.5).astype(a.data.dtype)
            a = a * Tensor._wrap(inv[:, None] * inv[None, :])
        return a

    def named_params(self, prefix):
        return {f"{prefix}.raw": self.raw}

    def named_buffers(self, prefix):
        return {}


def init_adjacency(n, rng, scale=0.01, normalized=False) -> AdjacencyParam:
    """Identity plus small symmetric noise; deterministic given the rng state."""
    noise = rng.normal(0.0, 1.0, size=(n, n))
    raw = np.eye(n) + scale * 0.5 * (noise + noise.T)
    return AdjacencyParam(Tensor(raw, requires_grad=True), normalized=normalized)


class GraphConv:
    """Two-layer graph convolution, one instance per modality."""

    def __init__(self, n_nodes, in_dim, hidden, out_dim, rng, normalized=False):
        self.adj = init_adjacency(n_nodes, rng, normalized=normalized)
        self.w1 = Linear(in_dim, hidden, rng, bias=False)
        self.w2 = Linear(hidden, out_dim, rng, bias=False)

    def __call__(self, e):
        return gcn_forward(e, self.adj, self.w1.w, self.w2.w)

    def named_params(self, prefix):
        out = dict(self.adj.named_params(f"{prefix}.adj"))
        out[f"{prefix}.w1"] = self.w1.w
        out[f"{prefix}.w2"] = self.w2.w
        return out

    def named_buffers(self, prefix):
        return {}


def gcn_forward(e, adj: AdjacencyParam, w1, w2):
    """Per-time-step propagation: relu(A E_t W1), then A (.) W2.

    e: Tensor [B, T, N, D]; returns [B, T, N, D'] (time kept for the
    attention stage; pool with temporal_pool for the per-modality summary).
    """
    if e.ndim != 4:
        raise DimensionError(f"gcn_forward expects [B, T, N, D], got {e.shape}")
    n = adj.n_nodes
    if e.shape[2] != n:
        raise DimensionError(
            f"node count mismatch: embeddings have {e.shape[2]} nodes, adjacency has {n}")
    a = adj.effective()
    hidden = relu(a @ e @ w1)
    return a @ hidden @ w2


def temporal_pool(z):
    """Average over the time axis: [B, T, N, D] -> [B, N, D]."""
    if z.ndim != 4:
        raise DimensionError(f"temporal_pool expects [B, T, N, D], got {z.shape}")
    if z.shape[1] < 1:
        raise DimensionError("temporal_pool over an empty time axis")
    return mean(z, axis=1)
