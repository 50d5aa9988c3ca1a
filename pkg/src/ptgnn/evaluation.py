"""Metrics, cross-validation harness, alignment evaluation, and sweeps.

Folds are grouped by subject: no participant contributes windows to both
the training and test side of any fold. Reported metrics follow the
video-only inference path (the deployable model); alignment quality
compares the video and sensor embeddings of the same windows.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ABLATION_FLAGS
from .errors import ConfigError, ContractError, DataError
from .data import make_windows

N_CLASSES = 11


# -- metric primitives -------------------------------------------------------


def topk_accuracy(logits, labels, k):
    """Percentage of samples whose true label ranks in the top k.

    Ties break toward the lower class index (stable sort on descending
    logits), so results are deterministic.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or len(logits) != len(labels):
        raise ContractError(f"logits {logits.shape} vs labels {labels.shape}")
    if len(labels) == 0:
        raise ContractError("topk_accuracy over an empty batch")
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    hits = (order == labels[:, None]).any(axis=1).sum()
    return int(hits) / len(labels) * 100.0


def confusion_matrix(predictions, labels, n_classes=N_CLASSES):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (labels, predictions), 1)
    return m


def macro_f1(confusion):
    """Unweighted mean of per-class F1 over classes with true samples.

    Classes without support (empty confusion row) are excluded from the
    mean; a supported class with no correct or predicted samples
    contributes an F1 of 0.
    """
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ContractError(f"confusion matrix must be square, got {confusion.shape}")
    scores = []
    for c in range(confusion.shape[0]):
        support = int(confusion[c].sum())
        if support == 0:
            continue
        tp = int(confusion[c, c])
        predicted = int(confusion[:, c].sum())
        precision = tp / predicted if predicted else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
    if not scores:
        return 0.0
    total = 0.0
    for s in scores:  # plain sequential sum: bit-stable across implementations
        total += s
    return total / len(scores) * 100.0


def supported_classes(confusion):
    return [c for c in range(len(confusion)) if confusion[c].sum() > 0]


def _derangement(n, rng):
    """Permutation without fixed points (preferring a minimal repair)."""
    perm = rng.permutation(n)
    fixed = np.flatnonzero(perm == np.arange(n))
    if len(fixed) == 1:
        i = int(fixed[0])
        j = (i + 1) % n
        perm[[i, j]] = perm[[j, i]]
    elif len(fixed) > 1:
        perm[fixed] = perm[np.roll(fixed, 1)]
    return perm


def alignment_report(z_v, z_p, mode="paired", seed=0):
    """Mean cosine similarity and MSE over embedding pairs.

    ``shuffled`` permutes the sensor embeddings across samples with a
    fixed-seed derangement, breaking the pairing as the randomized
    baseline.
    """
    z_v = np.asarray(z_v, dtype=np.float64)
    z_p = np.asarray(z_p, dtype=np.float64)
    if z_v.shape != z_p.shape:
        raise ContractError(f"embedding sets differ in shape: {z_v.shape} vs {z_p.shape}")
    if mode not in ("paired", "shuffled"):
        raise ContractError(f"mode must be paired or shuffled, got {mode!r}")
    if mode == "shuffled":
        if len(z_p) < 2:
            raise ContractError("shuffled mode needs at least two samples")
        z_p = z_p[_derangement(len(z_p), np.random.default_rng(seed))]
    dots = (z_v * z_p).sum(axis=1)
    norms = np.linalg.norm(z_v, axis=1) * np.linalg.norm(z_p, axis=1)
    cosine = float(np.mean(dots / np.maximum(norms, 1e-12)))
    mse = float(np.mean(((z_v - z_p) ** 2).sum(axis=1)))
    return cosine, mse


# -- folds -------------------------------------------------------------------


@dataclass
class FoldPlan:
    folds: list  # list of lists of subject ids
    seed: int

    def test_subjects(self, fold):
        return self.folds[fold]

    def train_subjects(self, fold):
        return [s for i, f in enumerate(self.folds) if i != fold for s in f]


def make_folds(subject_ids, k, seed) -> FoldPlan:
    ids = sorted(subject_ids)
    if k < 2 or k > len(ids):
        raise ConfigError(f"cannot split {len(ids)} subjects into {k} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    folds = [[] for _ in range(k)]
    for pos, idx in enumerate(order):
        folds[pos % k].append(ids[idx])
    return FoldPlan([sorted(f) for f in folds], seed)


# -- reports -----------------------------------------------------------------


@dataclass
class MetricsReport:
    top1: float
    top3: float
    macro_f1: float
    cosine: float
    align_mse: float
    confusion: list                      # 11x11 ints
    per_fold: list = field(default_factory=list)
    std: dict = field(default_factory=dict)
    excluded_classes: list = field(default_factory=list)
    alignment_mode: str = "paired"
    ablations: list = field(default_factory=list)

    def to_json(self):
        payload = {
            "top1": self.top1, "top3": self.top3, "macro_f1": self.macro_f1,
            "cosine": self.cosine, "align_mse": self.align_mse,
            "confusion": [list(map(int, row)) for row in self.confusion],
            "per_fold": self.per_fold, "std": self.std,
            "excluded_classes": list(map(int, self.excluded_classes)),
            "alignment_mode": self.alignment_mode,
            "ablations": list(self.ablations),
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(**d)


def evaluate_windows(model, window_sets, batch_size=64):
    """Video-path predictions plus both embeddings for a list of WindowSets.

    Returns (logits [N, 11], labels, z_v, z_p, subject_ids).
    """
    from .numerics import Tensor, no_grad
    from .numerics.ops import EVAL

    logits, zvs, zps, labels, subjects = [], [], [], [], []
    for ws in window_sets:
        n = len(ws)
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            with no_grad():
                z_p = model.forward_sensor(
                    Tensor(ws.eye[lo:hi][..., None]), Tensor(ws.head[lo:hi][..., None]),
                    Tensor(ws.phy[lo:hi][..., None]), mode=EVAL)
                z_v = model.forward_video(Tensor(ws.clips[lo:hi]))
                out = model.video_logits(z_v)
            logits.append(out.data.copy())
            zvs.append(z_v.data.copy())
            zps.append(z_p.data.copy())
        labels.append(ws.labels)
        subjects.extend([ws.subject_id] * n)
    return (np.concatenate(logits), np.concatenate(labels),
            np.concatenate(zvs), np.concatenate(zps), subjects)


def _fold_metrics(model, test_sets, alignment_mode, seed):
    logits, labels, z_v, z_p, _ = evaluate_windows(model, test_sets)
    preds = np.argmax(logits, axis=1)
    confusion = confusion_matrix(preds, labels)
    cosine, mse = alignment_report(z_v, z_p, mode=alignment_mode, seed=seed)
    return {
        "top1": topk_accuracy(logits, labels, 1),
        "top3": topk_accuracy(logits, labels, 3),
        "macro_f1": macro_f1(confusion),
        "cosine": cosine,
        "align_mse": mse,
        "confusion": confusion,
    }


def run_cv(recordings, cfg, ablation_flags=(), label_shuffle_seed=None,
           log=None) -> MetricsReport:
    """Train and evaluate one model per fold; aggregate over folds.

    ``label_shuffle_seed`` permutes the window labels across the whole
    dataset before folding (the chance-level control).
    """
    from .training import train_model

    flags = tuple(ablation_flags)
    unknown = set(flags) - set(ABLATION_FLAGS)
    if unknown:
        raise ConfigError(f"unknown ablation flags: {sorted(unknown)}")
    eff_cfg = cfg.apply_ablations(flags)
    window_sets = [make_windows(r, eff_cfg["data.window"], eff_cfg["data.stride"],
                                eff_cfg["data.segments"],
                                eff_cfg["data.clip_seconds"]) for r in recordings]
    if label_shuffle_seed is not None:
        _shuffle_labels(window_sets, label_shuffle_seed)
    plan = make_folds([w.subject_id for w in window_sets], eff_cfg["eval.folds"],
                      eff_cfg["train.seed"])
    by_subject = {w.subject_id: w for w in window_sets}
    alignment_mode = "shuffled" if "shuffled_baseline" in flags else "paired"

    def one_fold(fold):
        train_sets = [by_subject[s] for s in plan.train_subjects(fold)]
        test_sets = [by_subject[s] for s in plan.test_subjects(fold)]
        model, _ = train_model(eff_cfg, train_sets,
                               seed=eff_cfg["train.seed"] + 1000 * fold, log=log)
        return _fold_metrics(model, test_sets, alignment_mode, eff_cfg["train.seed"])

    workers = fold_workers(eff_cfg)
    n_folds = eff_cfg["eval.folds"]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fold_results = list(pool.map(one_fold, range(n_folds)))
    else:
        fold_results = [one_fold(f) for f in range(n_folds)]

    confusion = sum(r["confusion"] for r in fold_results)
    per_fold = [{k: r[k] for k in ("top1", "top3", "macro_f1", "cosine", "align_mse")}
                for r in fold_results]
    agg = {k: float(np.mean([f[k] for f in per_fold])) for k in per_fold[0]}
    std = {k: float(np.std([f[k] for f in per_fold])) for k in per_fold[0]}
    excluded = [c for c in range(N_CLASSES) if confusion[c].sum() == 0]
    return MetricsReport(
        top1=agg["top1"], top3=agg["top3"], macro_f1=agg["macro_f1"],
        cosine=agg["cosine"], align_mse=agg["align_mse"],
        confusion=confusion.tolist(), per_fold=per_fold, std=std,
        excluded_classes=excluded, alignment_mode=alignment_mode,
        ablations=sorted(flags),
    )


def fold_workers(cfg):
    workers = cfg["eval.parallel_folds"]
    env_cap = os.environ.get("PTGNN_THREADS")
    if env_cap:
        try:
            workers = min(workers, max(1, int(env_cap)))
        except ValueError:
            raise ConfigError(f"PTGNN_THREADS must be an integer, got {env_cap!r}")
    return max(1, min(workers, cfg["eval.folds"]))


def _shuffle_labels(window_sets, seed):
    rng = np.random.default_rng(seed)
    all_labels = np.concatenate([w.labels for w in window_sets])
    shuffled = all_labels[rng.permutation(len(all_labels))]
    off = 0
    for w in window_sets:
        w.labels = shuffled[off:off + len(w)]
        off += len(w)


def sweep(recordings, cfg, windows, kernels, ablation_flags=(), log=None):
    """Grid of run_cv calls over (window size, difference half-width).

    Per-cell failures are recorded as error strings; the sweep continues.
    Returns a list of row dicts ready for CSV serialization.
    """
    if not windows or not kernels:
        raise ConfigError("sweep grids must be non-empty")
    rows = []
    for w in windows:
        for k in kernels:
            cell = {"window": w, "kernel": k}
            try:
                cell_cfg = cfg.with_overrides(data__window=w, diffattn__k=k)
                report = run_cv(recordings, cell_cfg, ablation_flags, log=log)
                cell.update(top1=report.top1, top3=report.top3,
                            macro_f1=report.macro_f1, error="")
            except Exception as err:  # per-cell fail isolation
                cell.update(top1="", top3="", macro_f1="", error=str(err))
            rows.append(cell)
    return rows


def sweep_csv(rows):
    lines = ["window,kernel,top1,top3,macro_f1,error"]
    for r in rows:
        lines.append(f"{r['window']},{r['kernel']},{r['top1']},{r['top3']},"
                     f"{r['macro_f1']},{r['error']}")
    return "\n".join(lines) + "\n"
