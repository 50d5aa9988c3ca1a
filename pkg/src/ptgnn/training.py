"""Single-context training loop with early stopping and loss logging.

Each call owns its model, optimizer, and RNG streams; nothing is shared
across contexts, so cross-validation folds can train on separate threads.
Normalization statistics come from the training windows only and are
stored as model buffers (the video-side statistics ride along in the
checkpoint so stripped, video-only inference normalizes identically).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .losses import sensor_branch_loss, total_loss
from .numerics import Adam, Tensor, no_grad
from .numerics.ops import EVAL, TRAIN


def norm_stats(window_sets):
    """Per-channel mean/std over the training windows (sensor + clip)."""
    eye = np.concatenate([w.eye for w in window_sets])
    head = np.concatenate([w.head for w in window_sets])
    phy = np.concatenate([w.phy for w in window_sets])
    clips = np.concatenate([w.clips for w in window_sets])
    stats = {}
    for name, arr in (("eye", eye), ("head", head), ("phy", phy), ("clips", clips)):
        flat = arr.reshape(-1, arr.shape[-1])
        stats[name] = (flat.mean(axis=0).astype(np.float32),
                       (flat.std(axis=0) + 1e-6).astype(np.float32))
    return stats


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def _stack(window_sets):
    return {
        "eye": np.concatenate([w.eye for w in window_sets]),
        "head": np.concatenate([w.head for w in window_sets]),
        "phy": np.concatenate([w.phy for w in window_sets]),
        "clips": np.concatenate([w.clips for w in window_sets]),
        "labels": np.concatenate([w.labels for w in window_sets]),
    }


def _batch_loss(model, arrays, idx, cfg, mode, rng=None):
    eye = Tensor(arrays["eye"][idx][..., None])
    head = Tensor(arrays["head"][idx][..., None])
    phy = Tensor(arrays["phy"][idx][..., None])
    clips = Tensor(arrays["clips"][idx])
    labels = arrays["labels"][idx]
    z_p = model.forward_sensor(eye, head, phy, mode=mode, rng=rng)
    z_v = model.forward_video(clips)
    probe_ce = sensor_branch_loss(z_p, labels, model.probe_logits)
    video_part = total_loss(model.video_logits(z_v), labels, z_v, z_p,
                            beta=cfg["losses.beta"],
                            bidirectional=cfg["losses.bidirectional"])
    loss = video_part + probe_ce
    align_value = float(np.mean(((z_v.data - z_p.data) ** 2).sum(axis=1)))
    total = float(loss.data)
    probe = float(probe_ce.data)
    # predictive part: both cross-entropies, excluding the alignment penalty
    # (its value legitimately grows while the embeddings spread out, so it
    # would mislead plateau detection)
    pre = total - cfg["losses.beta"] * align_value
    return loss, {"total": total, "pre": pre, "align": align_value, "probe": probe,
                  "video_ce": pre - probe}


def train_model(cfg, train_sets, seed=0, log=None):
    """Train a fresh model on the given WindowSets.

    Returns (model, history). ``log`` receives one text line per step and
    per epoch (no timestamps: logs stay byte-reproducible).
    """
    from .model import MMPTGNN

    model = MMPTGNN(cfg, seed=seed)
    model.set_normalization(norm_stats(train_sets))
    arrays = _stack(train_sets)
    n = len(arrays["labels"])
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7A91]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xD407]))

    val_fraction = cfg["train.val_fraction"]
    n_val = int(round(n * val_fraction))
    split = rng.permutation(n)
    val_idx, train_idx = split[:n_val], split[n_val:]

    opt = Adam(model.named_params(), lr=cfg["optim.lr"], beta1=cfg["optim.beta1"],
               beta2=cfg["optim.beta2"], eps=cfg["optim.eps"])
    history = []
    best_val = np.inf
    best_state = None
    stall = 0
    step = 0
    for epoch in range(cfg["train.epochs"]):
        epoch_losses = []
        for batch in _epoch_batches(len(train_idx), cfg["train.batch_size"], rng):
            idx = train_idx[batch]
            opt.zero_grad()
            loss, parts = _batch_loss(model, arrays, idx, cfg, TRAIN, rng=drop_rng)
            if not np.isfinite(parts["total"]):
                raise NumericError(f"non-finite training loss at step {step}")
            loss.backward()
            opt.step()
            step += 1
            epoch_losses.append(parts["total"])
            if log:
                log(f"step={step} epoch={epoch} loss={parts['total']:.6f} "
                    f"video_ce={parts['video_ce']:.6f} align={parts['align']:.6f} "
                    f"probe={parts['probe']:.6f}")
        record = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if n_val:
            with no_grad():
                _, vparts = _batch_loss(model, arrays, val_idx, cfg, EVAL)
            record["val_loss"] = vparts["total"]
            record["val_pre"] = vparts["pre"]
            if log:
                log(f"epoch={epoch} train_loss={record['train_loss']:.6f} "
                    f"val_loss={record['val_loss']:.6f} val_pre={record['val_pre']:.6f}")
            if vparts["pre"] < best_val - 1e-6:
                best_val = vparts["pre"]
                best_state = {k: v.copy() for k, v in model.state()[0].items()}
                stall = 0
            else:
                stall += 1
                if stall > cfg["train.patience"]:
                    record["early_stop"] = True
                    history.append(record)
                    break
        history.append(record)
    if best_state is not None:
        model.load_state(_DictState(best_state))
    return model, history


class _DictState:
    def __init__(self, tensors):
        self.tensors = tensors

    def get(self, name):
        return self.tensors[name]
