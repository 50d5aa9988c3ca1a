"""Difference attention encoder over the concatenated modality graphs.

Pipeline: project each modality's time-indexed node features into a shared
d-dimensional space, concatenate along the node axis ([eye | head | phy],
order fixed), subtract a local temporal window mean (the difference
operator), form difference-enhanced node representations, and route
messages through an attention matrix fused with a static prior. A single
pre-norm transformer block (values from layer-normed features, residual,
feed-forward, final layer norm) restores expressivity; the personalized
embedding is the mean over nodes and time.

Attention energies are additive per head: Energy[i, j] = u . r_i + v . r_j,
which is the concatenated-pair linear map materialized as two projections
(avoids N^2 concatenation memory). Softmax is applied per time step and
the row-stochastic matrices are averaged over the window, keeping the
attention time-resolved before aggregation.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .layers import LayerNorm, Linear, collect_buffers, collect_params
from .numerics import Tensor, concat, mean, relu, sigmoid, softmax

# how the node representation feeding the energies is built
DIFF_SUBTRACT = "subtract"  # r = x - dx (default)
DIFF_CONCAT = "concat"      # r = [x || dx] (exploratory)
DIFF_RAW = "raw"            # r = x (standard-attention ablation)

DIFF_MODES = (DIFF_SUBTRACT, DIFF_CONCAT, DIFF_RAW)


def difference_operator(x, k):
    """Center minus the mean of a (2k+1)-wide temporal window.

    Computed as sum_j ((x_t - x_{t-j}) + (x_t - x_{t+j})) / (2k+1) with
    replicate padding at the boundaries, which is exactly zero on
    constant inputs (and on integer-valued linear ramps in the interior)
    rather than zero up to rounding. k=0 returns exact zeros.
    """
    if x.ndim != 4:
        raise DimensionError(f"difference_operator expects [B, T, N, d], got {x.shape}")
    if k < 0:
        raise ContractError(f"window half-width must be >= 0, got {k}")
    if k == 0:
        return x * 0.0
    T = x.shape[1]
    acc = None
    for j in range(1, k + 1):
        if j < T:
            left = concat([x[:, :1]] * j + [x[:, :T - j]], axis=1)
            right = concat([x[:, j:]] + [x[:, T - 1:]] * j, axis=1)
        else:
            left = concat([x[:, :1]] * T, axis=1)
            right = concat([x[:, T - 1:]] * T, axis=1)
        term = (x - left) + (x - right)
        acc = term if acc is None else acc + term
    return acc * (1.0 / (2 * k + 1))


def build_static_adjacency(node_counts, cross_weight=0.01, dtype=np.float64):
    """Row-stochastic prior: within-modality blocks plus weak cross links."""
    total = sum(node_counts)
    a = np.full((total, total), cross_weight, dtype=dtype)
    off = 0
    for n in node_counts:
        a[off:off + n, off:off + n] = 1.0
        off += n
    a /= a.sum(axis=1, keepdims=True)
    return a


def attention(x, dx, energy_u, energy_v, a_static, lam, diff_mode=DIFF_SUBTRACT):
    """Eq-level attention: energies from difference-enhanced features,
    per-step row softmax scaled by sqrt(d), temporal mean, then fusion
    with the static prior via lam in [0, 1].

    x, dx: [B, T, N, d]; energy_u/v: [d_in, h]; a_static: [N, N] constant;
    lam: scalar Tensor (or float). Returns (attn [B, h, N, N], fused same).
    """
    if diff_mode not in DIFF_MODES:
        raise ConfigError(f"unknown diff mode {diff_mode!r}; pick from {DIFF_MODES}")
    if diff_mode == DIFF_SUBTRACT:
        r = x - dx
    elif diff_mode == DIFF_CONCAT:
        r = concat([x, dx], axis=-1)
    else:
        r = x
    B, T, N, d = x.shape
    if r.shape[-1] != energy_u.shape[0]:
        raise DimensionError(
            f"energy projection expects {energy_u.shape[0]} features, got {r.shape[-1]}")
    h = energy_u.shape[1]
    si = (r @ energy_u).transpose(0, 1, 3, 2)  # [B, T, h, N] source scores
    sj = (r @ energy_v).transpose(0, 1, 3, 2)
    energy = si.reshape(B, T, h, N, 1) + sj.reshape(B, T, h, 1, N)
    attn_t = softmax(energy * (1.0 / np.sqrt(d)), axis=-1)
    attn = mean(attn_t, axis=1)  # [B, h, N, N]
    if not isinstance(lam, Tensor):
        lam = Tensor._wrap(np.asarray(lam, dtype=x.data.dtype))
    if not isinstance(a_static, Tensor):
        a_static = Tensor._wrap(np.asarray(a_static, dtype=x.data.dtype))
    fused = lam * a_static + (1.0 - lam) * attn
    return attn, fused


class DAEncoder:
    """Projection, difference attention, and the transformer block."""

    def __init__(self, in_dims, node_counts, d, heads, k, ffn_hidden, rng,
                 diff_mode=DIFF_SUBTRACT, lambda_init=0.5, out_scale=0.25):
        if d % heads != 0:
            raise ConfigError(f"head count {heads} must divide embedding dim {d}")
        if not 0.0 < lambda_init < 1.0:
            raise ConfigError(f"lambda_init must lie strictly in (0, 1), got {lambda_init}")
        self.d = d
        self.heads = heads
        self.k = k
        self.diff_mode = diff_mode
        self.node_counts = tuple(node_counts)
        self.projs = [Linear(c, d, rng) for c in in_dims]
        e_in = 2 * d if diff_mode == DIFF_CONCAT else d
        s = 1.0 / np.sqrt(e_in)
        self.energy_u = Tensor(rng.normal(0.0, s, size=(e_in, heads)), requires_grad=True)
        self.energy_v = Tensor(rng.normal(0.0, s, size=(e_in, heads)), requires_grad=True)
        # lam = sigmoid(rho), so the fusion coefficient stays inside [0, 1]
        self.rho = Tensor(np.array(np.log(lambda_init / (1.0 - lambda_init))),
                          requires_grad=True)
        from .numerics import default_dtype
        self.a_static = build_static_adjacency(node_counts, dtype=default_dtype())
        self.value = Linear(d, d, rng)
        self.out = Linear(d, d, rng)
        self.ln1 = LayerNorm(d)
        self.ln2 = LayerNorm(d)
        self.ln_final = LayerNorm(d)
        # small output scale keeps the embedding-consistency penalty on the
        # same footing as the cross-entropy terms at the start of training
        self.ln_final.gamma.data[...] = out_scale
        self.ffn_in = Linear(d, ffn_hidden, rng)
        self.ffn_out = Linear(ffn_hidden, d, rng)

    def fusion_coefficient(self):
        return sigmoid(self.rho)

    def project_and_concat(self, features):
        """Per-modality affine maps into the shared space, then node concat.

        features: sequence of [B, T, N_i, C_i] tensors, all sharing (B, T).
        """
        if len(features) != len(self.projs):
            raise ContractError(f"expected {len(self.projs)} modalities, got {len(features)}")
        bt = features[0].shape[:2]
        for f, n in zip(features, self.node_counts):
            if f.shape[:2] != bt:
                raise ContractError(
                    f"batch/time extents differ after alignment: {f.shape[:2]} vs {bt}")
            if f.shape[2] != n:
                raise DimensionError(f"modality node count {f.shape[2]} != expected {n}")
        projected = [proj(f) for proj, f in zip(self.projs, features)]
        return concat(projected, axis=2)

    def forward(self, features):
        """features: per-modality [B, T_i, N_i, C_i] -> z_p [B, d].

        Modalities are aligned by truncating every stream to the shortest
        time extent, keeping the most recent steps (labels sit at window
        ends).
        """
        t_min = min(f.shape[1] for f in features)
        features = [f if f.shape[1] == t_min else f[:, -t_min:] for f in features]
        x = self.project_and_concat(features)
        B, T, N, d = x.shape
        dx = difference_operator(x, self.k)
        _, fused = attention(x, dx, self.energy_u, self.energy_v,
                             self.a_static.astype(x.data.dtype),
                             self.fusion_coefficient(), self.diff_mode)
        y = self._message_passing(self.ln1(x), fused)
        x1 = x + self.out(y)
        x2 = x1 + self.ffn_out(relu(self.ffn_in(self.ln2(x1))))
        out = self.ln_final(x2)
        return mean(out, axis=(1, 2))

    def _message_passing(self, x, fused):
        B, T, N, d = x.shape
        dh = d // self.heads
        v = self.value(x).reshape(B, T, N, self.heads, dh).transpose(0, 1, 3, 2, 4)
        mixed = fused.reshape(B, 1, self.heads, N, N) @ v  # broadcast over T
        return mixed.transpose(0, 1, 3, 2, 4).reshape(B, T, N, d)

    def _layers(self, prefix):
        out = {f"{prefix}.proj.{m}": p
               for m, p in zip(("eye", "head", "phy"), self.projs)}
        out[f"{prefix}.value"] = self.value
        out[f"{prefix}.out"] = self.out
        out[f"{prefix}.ln1"] = self.ln1
        out[f"{prefix}.ln2"] = self.ln2
        out[f"{prefix}.ln_final"] = self.ln_final
        out[f"{prefix}.ffn_in"] = self.ffn_in
        out[f"{prefix}.ffn_out"] = self.ffn_out
        return out

    def named_params(self, prefix):
        out = collect_params(self._layers(prefix))
        out[f"{prefix}.energy_u"] = self.energy_u
        out[f"{prefix}.energy_v"] = self.energy_v
        out[f"{prefix}.rho"] = self.rho
        return out

    def named_buffers(self, prefix):
        out = collect_buffers(self._layers(prefix))
        out[f"{prefix}.a_static"] = self.a_static
        return out


def dae_forward(x_eye, x_head, x_phy, encoder: DAEncoder):
    """Personalized embedding z_p from the three modality feature streams."""
    return encoder.forward([x_eye, x_head, x_phy])
