"""Run configuration: flat ``key = value`` text with dotted namespaces.

Every tunable lives here and is validated before anything executes;
unknown keys are rejected. The canonical serialization (sorted keys, one
``key = value`` line each) feeds the checkpoint config hash, so identical
configs hash identically byte for byte.
"""

from __future__ import annotations

import hashlib

from .errors import ConfigError

_INT, _FLOAT, _BOOL, _STR, _INTS = "int", "float", "bool", "str", "ints"

# key -> (type, default)
SCHEMA = {
    "data.window": (_INT, 300),
    "data.stride": (_INT, 30),
    "data.segments": (_INT, 8),
    "data.clip_seconds": (_INT, 2),
    "synthetic.subjects": (_INT, 10),
    "synthetic.duration": (_INT, 600),
    "synthetic.noise": (_FLOAT, 0.1),
    "synthetic.seed": (_INT, 0),
    "synthetic.feature_dim": (_INT, 128),
    "encoder.eye.channels": (_INTS, (16, 32, 32)),
    "encoder.eye.kernels": (_INTS, (5, 3, 3)),
    "encoder.eye.pools": (_INTS, (2, 2, 2)),
    "encoder.eye.dropout": (_FLOAT, 0.1),
    "encoder.head.channels": (_INTS, (16, 32, 32)),
    "encoder.head.kernels": (_INTS, (5, 3, 3)),
    "encoder.head.pools": (_INTS, (2, 2, 2)),
    "encoder.head.dropout": (_FLOAT, 0.1),
    "encoder.phy.channels": (_INTS, (16, 32, 32)),
    "encoder.phy.kernels": (_INTS, (5, 3, 3)),
    "encoder.phy.pools": (_INTS, (1, 1, 1)),
    "encoder.phy.dropout": (_FLOAT, 0.1),
    "graph.hidden": (_INT, 32),
    "graph.out_dim": (_INT, 32),
    "graph.normalized": (_BOOL, False),
    "diffattn.k": (_INT, 2),
    "diffattn.d": (_INT, 64),
    "diffattn.heads": (_INT, 4),
    "diffattn.mode": (_STR, "subtract"),
    "diffattn.ffn_hidden": (_INT, 128),
    "diffattn.lambda_init": (_FLOAT, 0.5),
    "diffattn.out_scale": (_FLOAT, 0.25),
    "video.backbone": (_STR, "linear"),
    "video.hidden": (_INT, 128),
    "video.out_dim": (_INT, 128),
    "losses.beta": (_FLOAT, 1.0),
    "losses.bidirectional": (_BOOL, False),
    "optim.lr": (_FLOAT, 1e-3),
    "optim.beta1": (_FLOAT, 0.9),
    "optim.beta2": (_FLOAT, 0.999),
    "optim.eps": (_FLOAT, 1e-8),
    "train.epochs": (_INT, 50),
    "train.batch_size": (_INT, 32),
    "train.patience": (_INT, 10),
    "train.seed": (_INT, 0),
    "train.val_fraction": (_FLOAT, 0.1),
    "eval.folds": (_INT, 5),
    "eval.parallel_folds": (_INT, 1),
}

ABLATION_FLAGS = ("no_diffattention", "no_alignment", "shuffled_baseline",
                  "adjacency_normalized")


def _parse_value(key, kind, raw):
    raw = raw.strip()
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _BOOL:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == _INTS:
            return tuple(int(v) for v in raw.split(","))
        return raw
    except ValueError as err:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from err


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    def __init__(self, values=None):
        self.values = {k: d for k, (_, d) in SCHEMA.items()}
        if values:
            for k, v in values.items():
                if k not in SCHEMA:
                    raise ConfigError(f"unknown config key {k!r}")
                self.values[k] = v
        self.validate()

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    @classmethod
    def from_text(cls, text):
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key not in SCHEMA:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, SCHEMA[key][0], raw)
        return cls(values)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                return cls.from_text(fh.read())
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err

    @classmethod
    def from_flat(cls, flat):
        """Rebuild from a {key: formatted string} mapping (checkpoint manifest)."""
        values = {k: _parse_value(k, SCHEMA[k][0], v) for k, v in flat.items()
                  if k in SCHEMA}
        unknown = set(flat) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys in manifest: {sorted(unknown)}")
        return cls(values)

    def to_text(self):
        return "\n".join(f"{k} = {_format_value(self.values[k])}"
                         for k in sorted(self.values)) + "\n"

    def to_flat(self):
        return {k: _format_value(v) for k, v in sorted(self.values.items())}

    def config_hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def with_overrides(self, **overrides):
        values = dict(self.values)
        for key, v in overrides.items():
            key = key.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = v
        return RunConfig(values)

    def apply_ablations(self, flags):
        """Training-time ablation switches; returns a new config.

        ``shuffled_baseline`` is an evaluation-time switch and leaves the
        config untouched.
        """
        unknown = set(flags) - set(ABLATION_FLAGS)
        if unknown:
            raise ConfigError(f"unknown ablation flags: {sorted(unknown)} "
                              f"(valid: {ABLATION_FLAGS})")
        cfg = self
        if "no_diffattention" in flags:
            cfg = cfg.with_overrides(diffattn__mode="raw")
        if "no_alignment" in flags:
            cfg = cfg.with_overrides(losses__beta=0.0)
        if "adjacency_normalized" in flags:
            cfg = cfg.with_overrides(graph__normalized=True)
        return cfg

    def validate(self):
        v = self.values
        if v["diffattn.d"] % v["diffattn.heads"] != 0:
            raise ConfigError(
                f"diffattn.heads={v['diffattn.heads']} must divide diffattn.d={v['diffattn.d']}")
        if v["diffattn.mode"] not in ("subtract", "concat", "raw"):
            raise ConfigError(f"diffattn.mode must be subtract/concat/raw, got {v['diffattn.mode']!r}")
        if v["diffattn.k"] < 0:
            raise ConfigError("diffattn.k must be >= 0")
        if v["losses.beta"] < 0:
            raise ConfigError("losses.beta must be >= 0")
        if v["video.backbone"] not in ("linear", "tinyconv"):
            raise ConfigError(f"video.backbone must be linear or tinyconv, got {v['video.backbone']!r}")
        for key in ("data.window", "data.stride", "data.segments", "data.clip_seconds",
                    "train.epochs",
                    "train.batch_size", "eval.folds", "eval.parallel_folds"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be >= 1, got {v[key]}")
        if not 0.0 <= v["train.val_fraction"] < 0.5:
            raise ConfigError("train.val_fraction must lie in [0, 0.5)")
        if v["optim.lr"] <= 0:
            raise ConfigError("optim.lr must be positive")
        for m in ("eye", "head", "phy"):
            for part in ("channels", "kernels", "pools"):
                if len(v[f"encoder.{m}.{part}"]) != 3:
                    raise ConfigError(f"encoder.{m}.{part} must list exactly 3 stages")

    def encoder_config(self, modality):
        from .encoders import EncoderConfig
        return EncoderConfig(
            modality,
            channels=self[f"encoder.{modality}.channels"],
            kernels=self[f"encoder.{modality}.kernels"],
            pools=self[f"encoder.{modality}.pools"],
            dropout=self[f"encoder.{modality}.dropout"],
        )

    def synthetic_spec(self):
        from .data import SyntheticSpec
        return SyntheticSpec(
            n_subjects=self["synthetic.subjects"],
            duration_s=self["synthetic.duration"],
            noise=self["synthetic.noise"],
            seed=self["synthetic.seed"],
            feature_dim=self["synthetic.feature_dim"],
        )


def parse_synthetic_arg(arg):
    """Parse ``synthetic:subjects=10,noise=0.1,...`` into config overrides."""
    overrides = {}
    body = arg.split(":", 1)[1] if ":" in arg else ""
    if not body:
        return overrides
    for item in body.split(","):
        if "=" not in item:
            raise ConfigError(f"bad synthetic spec item {item!r} (expected key=value)")
        key, raw = item.split("=", 1)
        full = f"synthetic.{key.strip()}"
        if full not in SCHEMA:
            raise ConfigError(f"unknown synthetic spec key {key.strip()!r}")
        overrides[full] = _parse_value(full, SCHEMA[full][0], raw)
    return overrides
