"""Binary checkpoint container: JSON manifest plus raw tensor payload.

Layout: 5 magic bytes ``PTGC1``, little-endian uint32 manifest length, the
manifest JSON (sorted keys, compact separators), then the concatenated
tensor payload in manifest order (little-endian raw floats). Identical
model state and config produce byte-identical files. Any layout change
requires bumping FORMAT_VERSION; the loader enforces the match.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import CheckpointError
from .model import VIDEO_PREFIXES

MAGIC = b"PTGC1"
FORMAT_VERSION = 1

_DTYPES = {"f4": "<f4", "f8": "<f8"}


class Checkpoint:
    def __init__(self, config_flat, tensors, kinds, config_hash=""):
        self.config_flat = dict(config_flat)
        self.tensors = dict(tensors)
        self.kinds = dict(kinds)
        self.config_hash = config_hash

    @property
    def config(self):
        return self.config_flat

    def get(self, name):
        return self.tensors[name]

    def names(self):
        return sorted(self.tensors)

    def payload_bytes(self):
        return sum(t.nbytes for t in self.tensors.values())

    def param_scalars(self):
        return sum(t.size for n, t in self.tensors.items()
                   if self.kinds.get(n) == "param")

    def is_video_only(self):
        return all(n.startswith(VIDEO_PREFIXES) for n in self.tensors)


def save_checkpoint(path, checkpoint: Checkpoint):
    names = checkpoint.names()
    directory = {}
    offset = 0
    blobs = []
    for name in names:
        arr = np.asarray(checkpoint.tensors[name])
        code = "f8" if arr.dtype == np.float64 else "f4"
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        directory[name] = {
            "shape": list(arr.shape),
            "dtype": code,
            "offset": offset,
            "kind": checkpoint.kinds.get(name, "param"),
        }
        offset += len(blob)
        blobs.append(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": checkpoint.config_hash,
        "config": checkpoint.config_flat,
        "tensors": directory,
    }
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(body)))
        fh.write(body)
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path) -> Checkpoint:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (mlen,) = struct.unpack("<I", fh.read(4))
        try:
            manifest = json.loads(fh.read(mlen).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise CheckpointError(f"{path}: corrupt manifest") from err
        if manifest.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {manifest.get('format_version')} "
                f"unsupported (expected {FORMAT_VERSION})")
        payload = fh.read()
    tensors = {}
    kinds = {}
    for name, meta in manifest["tensors"].items():
        dt = np.dtype(_DTYPES[meta["dtype"]])
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        start = meta["offset"]
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=start)
        tensors[name] = arr.reshape(meta["shape"]).copy()
        kinds[name] = meta.get("kind", "param")
    return Checkpoint(manifest.get("config", {}), tensors, kinds,
                      config_hash=manifest.get("config_hash", ""))


def checkpoint_from_model(model, cfg) -> Checkpoint:
    tensors, kinds = model.state()
    return Checkpoint(cfg.to_flat(), tensors, kinds, config_hash=cfg.config_hash())


def strip_checkpoint(cp: Checkpoint):
    """Video-only copy: drops every sensor-branch tensor.

    Returns (stripped, was_already_stripped).
    """
    if cp.is_video_only():
        return cp, True
    kept = {n: t for n, t in cp.tensors.items() if n.startswith(VIDEO_PREFIXES)}
    kinds = {n: cp.kinds[n] for n in kept}
    return Checkpoint(cp.config_flat, kept, kinds, config_hash=cp.config_hash), False
