"""Batch-1 inference latency measurement for the video path."""

from __future__ import annotations

import json
import platform
import time

import numpy as np

from .errors import ContractError
from .video import InferenceEngine


def bench_latency(checkpoint, n_samples=1000, warmup=50, seed=0, config=None,
                  clip_shape=None):
    """Wall-clock per-sample latency of video-only inference.

    Runs ``warmup`` unmeasured iterations, then times ``n_samples`` calls
    on random clips (preprocessing included, clip load excluded). Returns
    a dict with mean/p50/p95/p99 in milliseconds plus model size and a
    machine descriptor.
    """
    if n_samples < 10:
        raise ContractError(f"need at least 10 samples for a latency report, got {n_samples}")
    engine = InferenceEngine(checkpoint, config=config)
    if clip_shape is None:
        from .config import RunConfig
        cfg = config if config is not None else RunConfig.from_flat(checkpoint.config)
        clip_shape = (cfg["data.segments"], cfg["synthetic.feature_dim"])
    rng = np.random.default_rng(seed)
    clips = rng.normal(size=(min(64, n_samples),) + tuple(clip_shape)).astype(np.float32)

    for i in range(warmup):
        engine.infer_level(clips[i % len(clips)])
    times = np.empty(n_samples)
    for i in range(n_samples):
        clip = clips[i % len(clips)]
        t0 = time.perf_counter()
        engine.infer_level(clip)
        times[i] = time.perf_counter() - t0
    ms = times * 1000.0
    return {
        "n_samples": n_samples,
        "warmup": warmup,
        "mean_ms": float(ms.mean()),
        "p50_ms": float(np.percentile(ms, 50)),
        "p95_ms": float(np.percentile(ms, 95)),
        "p99_ms": float(np.percentile(ms, 99)),
        "model_size_mb": checkpoint.payload_bytes() / (1024.0 * 1024.0),
        "param_scalars": checkpoint.param_scalars(),
        "machine": {
            "platform": platform.platform(),
            "processor": platform.processor() or platform.machine(),
            "python": platform.python_version(),
        },
    }


def format_report(report):
    return json.dumps(report, sort_keys=True, indent=1)
