"""Full model assembly: sensor branch, video branch, and heads.

Sensor path: per-modality hierarchical CNN encoders, per-modality graph
convolutions (time kept), then the difference attention encoder pooling
down to the personalized embedding z_p. A linear probe classifies from
z_p. Video path: segment backbone + projection to z_v, classified by a
small head; only this path runs at inference time.

All learnable tensors and persistent buffers carry unique dotted names;
``video.`` and ``classifier.`` prefixes are exactly what survives
checkpoint stripping.
"""

from __future__ import annotations

import numpy as np

from .diffattn import DAEncoder
from .encoders import MODALITIES, NODE_COUNTS, ModalityEncoder
from .graph import GraphConv
from .layers import Linear
from .numerics import Tensor
from .video import ClassifierHead, VideoBranch, make_backbone

SENSOR_PREFIXES = ("encoder.", "graph.", "diffattn.", "probe.", "norm.")
VIDEO_PREFIXES = ("video.", "classifier.")


class MMPTGNN:
    def __init__(self, cfg, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6D6F64]))
        d = cfg["diffattn.d"]
        self.cfg = cfg
        self.encoders = {m: ModalityEncoder(cfg.encoder_config(m), rng)
                         for m in MODALITIES}
        self.graphs = {
            m: GraphConv(NODE_COUNTS[m], cfg.encoder_config(m).out_depth,
                         cfg["graph.hidden"], cfg["graph.out_dim"], rng,
                         normalized=cfg["graph.normalized"])
            for m in MODALITIES
        }
        self.dae = DAEncoder(
            in_dims=[cfg["graph.out_dim"]] * 3,
            node_counts=[NODE_COUNTS[m] for m in MODALITIES],
            d=d, heads=cfg["diffattn.heads"], k=cfg["diffattn.k"],
            ffn_hidden=cfg["diffattn.ffn_hidden"], rng=rng,
            diff_mode=cfg["diffattn.mode"], lambda_init=cfg["diffattn.lambda_init"],
            out_scale=cfg["diffattn.out_scale"])
        self.probe = Linear(d, 11, rng)
        backbone = make_backbone(cfg["video.backbone"], cfg["synthetic.feature_dim"],
                                 cfg["video.hidden"], cfg["video.out_dim"], rng)
        self.video = VideoBranch(backbone, d, rng)
        self.classifier = ClassifierHead(d, rng)
        self.sensor_norm = {m: (np.zeros(NODE_COUNTS[m], dtype=np.float32),
                                np.ones(NODE_COUNTS[m], dtype=np.float32))
                            for m in MODALITIES}

    # -- forward paths ---------------------------------------------------

    def forward_sensor(self, eye, head, phy, mode, rng=None):
        """Window tensors [B, T, N, 1] per modality -> z_p [B, d]."""
        feats = []
        for name, x in (("eye", eye), ("head", head), ("phy", phy)):
            m, s = self.sensor_norm[name]
            xn = (x - Tensor._wrap(m[:, None].astype(x.data.dtype))) \
                * Tensor._wrap((1.0 / s)[:, None].astype(x.data.dtype))
            e = self.encoders[name](xn, mode=mode, rng=rng)
            feats.append(self.graphs[name](e))
        return self.dae.forward(feats)

    def set_normalization(self, stats):
        """Install train-fold channel statistics (see training.norm_stats)."""
        for m in MODALITIES:
            mean, std = stats[m]
            self.sensor_norm[m][0][...] = mean
            self.sensor_norm[m][1][...] = std
        clip_mean, clip_std = stats["clips"]
        self.video.norm_mean[...] = clip_mean
        self.video.norm_std[...] = clip_std

    def forward_video(self, clips):
        """Clip tensor [B, T_seg, F] -> z_v [B, d]."""
        return self.video(clips)

    def probe_logits(self, z_p):
        return self.probe(z_p)

    def video_logits(self, z_v):
        return self.classifier(z_v)

    # -- state -----------------------------------------------------------

    def named_params(self):
        out = {}
        for m in MODALITIES:
            out.update(self.encoders[m].named_params(f"encoder.{m}"))
            out.update(self.graphs[m].named_params(f"graph.{m}"))
        out.update(self.dae.named_params("diffattn"))
        out.update(self.probe.named_params("probe"))
        out.update(self.video.named_params("video"))
        out.update(self.classifier.named_params("classifier"))
        return out

    def named_buffers(self):
        out = {}
        for m in MODALITIES:
            out.update(self.encoders[m].named_buffers(f"encoder.{m}"))
            out.update(self.graphs[m].named_buffers(f"graph.{m}"))
            out[f"norm.{m}.mean"] = self.sensor_norm[m][0]
            out[f"norm.{m}.std"] = self.sensor_norm[m][1]
        out.update(self.dae.named_buffers("diffattn"))
        out.update(self.video.named_buffers("video"))
        out.update(self.classifier.named_buffers("classifier"))
        return out

    def state(self):
        """(tensor directory, kind directory) for checkpointing."""
        tensors = {}
        kinds = {}
        for name, p in self.named_params().items():
            tensors[name] = p.data
            kinds[name] = "param"
        for name, b in self.named_buffers().items():
            tensors[name] = np.asarray(b)
            kinds[name] = "buffer"
        return tensors, kinds

    def load_state(self, source):
        """Overwrite parameters and buffers from a checkpoint-like object."""
        for name, p in self.named_params().items():
            p.data = np.asarray(source.get(name), dtype=p.data.dtype).reshape(p.shape)
        for name, b in self.named_buffers().items():
            b[...] = np.asarray(source.get(name)).reshape(b.shape)

    def param_count(self):
        return sum(p.data.size for p in self.named_params().values())


def build_video_only(cfg):
    """Video branch + classifier head with config-shaped (unloaded) weights."""
    rng = np.random.default_rng(0)
    backbone = make_backbone(cfg["video.backbone"], cfg["synthetic.feature_dim"],
                             cfg["video.hidden"], cfg["video.out_dim"], rng)
    branch = VideoBranch(backbone, cfg["diffattn.d"], rng)
    head = ClassifierHead(cfg["diffattn.d"], rng)
    return branch, head
