"""Recording schema, preprocessing, windowing, and synthetic generation.

Stream schema (fixed): eye tracking 38 channels at 30 Hz, head motion IMU
12 channels at 30 Hz, physiological (EDA, BVP, SKT) 3 channels at 1 Hz,
video frame features at 30 FPS, integer severity labels 0..10 at 1 Hz,
all sharing a clock origin.

Preprocessing downsamples each motion stream to 1 Hz by emitting the
(mean, std) of every channel over non-overlapping 30-sample intervals
(population std; trailing partial intervals dropped). The model consumes
one scalar per node per second, so the window tensors carry the per-channel
means; the std features remain in the downsampled block for schema
completeness and config extension.

Synthetic recordings plant the label in the signals: a shared content
intensity c(t) in [0, 1] and a per-subject susceptibility u give
level(t) = floor(11 * u * c(t)), and every informative channel carries an
offset proportional to q(t) = level(t)/10 on top of a small subject
baseline. Distractor channels carry slowly wandering noise and no label
information. Frame features encode the content strongly, the severity
weakly, and the subject style separately, so video-only classification is
solvable but benefits from sensor-side supervision. At noise 0 the label
is recoverable exactly from the EDA channel (see recover_labels).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SchemaError
from .video import load_clip, save_clip

EYE_CHANNELS = 38
HEAD_CHANNELS = 12
PHY_CHANNELS = 3
MOTION_RATE = 30  # Hz, also the video FPS
LABEL_MIN, LABEL_MAX = 0, 10

# planted-pattern gains (per unit q = level/10)
EDA_GAIN = 1.5
BVP_GAIN = -1.0
SKT_GAIN = -0.8
HEAD_GAIN = 1.2
EYE_GAIN = 1.0
VIDEO_CONTENT_GAIN = 1.0
VIDEO_SEVERITY_GAIN = 0.1
BASELINE_SCALE = 0.05

_CONTENT_STREAM = 999983  # reserved seed-stream id for the shared content
_OFFSET_MAX = 150  # per-subject session start offset into the shared script (s)


@dataclass
class SubjectRecording:
    subject_id: str
    eye: np.ndarray      # [30*seconds, 38] float32
    head: np.ndarray     # [30*seconds, 12] float32
    phy: np.ndarray      # [seconds, 3] float32
    frames: np.ndarray   # [30*seconds, F] float32
    labels: np.ndarray   # [seconds] int

    def validate(self):
        if self.eye.ndim != 2 or self.eye.shape[1] != EYE_CHANNELS:
            raise SchemaError(f"eye stream must have {EYE_CHANNELS} channels, "
                              f"got shape {self.eye.shape}")
        if self.head.ndim != 2 or self.head.shape[1] != HEAD_CHANNELS:
            raise SchemaError(f"head stream must have {HEAD_CHANNELS} channels, "
                              f"got shape {self.head.shape}")
        if self.phy.ndim != 2 or self.phy.shape[1] != PHY_CHANNELS:
            raise SchemaError(f"phy stream must have {PHY_CHANNELS} channels, "
                              f"got shape {self.phy.shape}")
        seconds = len(self.labels)
        if len(self.phy) != seconds:
            raise SchemaError(f"phy rate mismatch: {len(self.phy)} samples for "
                              f"{seconds} labelled seconds (1 Hz expected)")
        for name, stream in (("eye", self.eye), ("head", self.head),
                             ("frames", self.frames)):
            if len(stream) != MOTION_RATE * seconds:
                raise SchemaError(
                    f"{name} rate mismatch: {len(stream)} samples for {seconds} s "
                    f"({MOTION_RATE} per second expected)")
        labels = np.asarray(self.labels)
        if labels.size and (labels.min() < LABEL_MIN or labels.max() > LABEL_MAX):
            raise SchemaError(f"labels outside {LABEL_MIN}..{LABEL_MAX}")
        return self

    @property
    def seconds(self):
        return len(self.labels)


@dataclass
class SyntheticSpec:
    n_subjects: int = 10
    duration_s: int = 600
    noise: float = 0.1
    seed: int = 0
    feature_dim: int = 128
    susceptibility_range: tuple = (0.55, 1.0)

    def __post_init__(self):
        if self.n_subjects < 1 or self.duration_s < 1:
            raise DataError("synthetic spec needs at least one subject and one second")
        if self.noise < 0:
            raise DataError(f"noise level must be >= 0, got {self.noise}")
        if self.feature_dim < 64:
            raise DataError("feature_dim must be >= 64 (pattern blocks need room)")


def _subject_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _content_schedule(seed, seconds):
    """Shared content intensity c(t): plateaus joined by short ramps.

    Scenes hold a uniform-random intensity for 12..30 s with 3 s linear
    transitions, so most windows end well inside a plateau (pure label)
    while the plateau values sweep [0, 1] uniformly, keeping the induced
    label histogram flat. Irregular plateau lengths avoid aliasing with
    window strides.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, _CONTENT_STREAM]))
    ramp = 3.0
    grid = (np.arange(11) + 0.5) / 11.0  # one value per severity band
    plateau_values = []
    while len(plateau_values) * 11 < seconds + _OFFSET_MAX + 200:
        block = grid[rng.permutation(11)] + rng.uniform(-0.04, 0.04, size=11)
        plateau_values.extend(np.clip(block, 0.0, 1.0))
    times = [0.0]
    values = [0.0]  # sessions start calm
    gate_times = [0.0]
    gate_values = [1.0]
    t = 0.0
    for value in plateau_values:
        hold = float(rng.uniform(17.0, 24.0))
        gate = float(rng.integers(0, 2))
        times.append(t + hold)
        values.append(values[-1])
        times.append(t + hold + ramp)
        values.append(float(value))
        gate_times.append(t + hold + ramp)
        gate_values.append(gate)
        t += hold + ramp
        if t > seconds + _OFFSET_MAX + 40:
            break
    tt = np.arange(seconds, dtype=float)
    c = np.interp(tt, times, values)
    # scene style flips per plateau: it decides which motion modality
    # expresses the severity pattern (head-driven vs gaze-driven scenes)
    idx = np.clip(np.searchsorted(gate_times, tt, side="right") - 1, 0,
                  len(gate_values) - 1)
    gate = np.asarray(gate_values, dtype=float)[idx]
    return c, gate


def _ou(rng, steps, channels, sigma, tau, dt):
    """Ornstein-Uhlenbeck noise: slow wander that survives 1 Hz averaging."""
    a = np.exp(-dt / tau)
    s = sigma * np.sqrt(1.0 - a * a)
    eps = rng.normal(0.0, 1.0, size=(steps, channels))
    out = np.empty((steps, channels))
    prev = rng.normal(0.0, sigma, size=channels)
    for i in range(steps):
        prev = a * prev + s * eps[i]
        out[i] = prev
    return out


def _subject_traits(spec: SyntheticSpec, rng):
    """Draws shared by generation and the recovery rule, in a fixed order."""
    u = rng.uniform(*spec.susceptibility_range)
    offset = int(rng.integers(0, _OFFSET_MAX + 1))
    phy_base = rng.normal(0.0, BASELINE_SCALE, size=PHY_CHANNELS)
    return u, offset, phy_base


def subject_susceptibility(spec: SyntheticSpec, index: int) -> float:
    u, _, _ = _subject_traits(spec, _subject_rng(spec.seed, index))
    return float(u)


def planted_levels(spec: SyntheticSpec, index: int) -> np.ndarray:
    """The documented label rule: floor(11 * u * c(t + offset)), clipped to 10.

    Every subject watches the same content script; sessions start at a
    subject-specific offset into it.
    """
    u, offset, _ = _subject_traits(spec, _subject_rng(spec.seed, index))
    c, _ = _content_schedule(spec.seed, spec.duration_s + _OFFSET_MAX)
    c = c[offset:offset + spec.duration_s]
    return np.minimum((11.0 * u * c).astype(int), LABEL_MAX)


def _eda_baseline(spec: SyntheticSpec, index: int) -> float:
    _, _, phy_base = _subject_traits(spec, _subject_rng(spec.seed, index))
    return float(phy_base[0])


def generate_synthetic(spec: SyntheticSpec) -> list:
    """Deterministic recordings with planted label patterns (see module doc)."""
    seconds = spec.duration_s
    script, script_gate = _content_schedule(spec.seed, seconds + _OFFSET_MAX)
    recordings = []
    for i in range(spec.n_subjects):
        rng = _subject_rng(spec.seed, i)
        u, offset, phy_base = _subject_traits(spec, rng)
        c = script[offset:offset + seconds]
        gate = script_gate[offset:offset + seconds]
        levels = np.minimum((11.0 * u * c).astype(int), LABEL_MAX)
        q = levels / 10.0
        q30 = np.repeat(q, MOTION_RATE)
        n30 = seconds * MOTION_RATE
        t30 = np.arange(n30) / MOTION_RATE
        noise = spec.noise
        phy = np.empty((seconds, PHY_CHANNELS))
        phy[:, 0] = phy_base[0] + EDA_GAIN * q
        phy[:, 1] = phy_base[1] + BVP_GAIN * q + 0.2 * np.sin(2 * np.pi * 0.23 * np.arange(seconds))
        phy[:, 2] = phy_base[2] + SKT_GAIN * q
        if noise > 0:
            phy += noise * 0.25 * rng.normal(size=phy.shape)
            phy += _ou(rng, seconds, PHY_CHANNELS, noise * 0.4, 5.0, 1.0)

        gate30 = np.repeat(gate, MOTION_RATE)
        head = _motion_stream(rng, q30 * gate30, HEAD_CHANNELS, HEAD_GAIN, noise)
        eye = _motion_stream(rng, q30 * (1.0 - gate30), EYE_CHANNELS, EYE_GAIN, noise)
        frames = _frame_stream(rng, spec, c, q30, u, t30)

        recordings.append(SubjectRecording(
            subject_id=f"s{i:02d}",
            eye=eye.astype(np.float32),
            head=head.astype(np.float32),
            phy=phy.astype(np.float32),
            frames=frames.astype(np.float32),
            labels=levels.astype(np.int64),
        ).validate())
    return recordings


def _motion_stream(rng, q30, channels, gain, noise):
    """First half of the channels carry the planted offset; the rest wander.

    Distractor channels mix a strong slow drift with fast jitter: they
    dominate raw instantaneous feature similarity without carrying any
    label information.
    """
    n30 = len(q30)
    informative = channels // 2
    weights = np.zeros(channels)
    signs = np.where(np.arange(informative) % 2 == 0, 1.0, -1.0)
    weights[:informative] = signs * np.linspace(0.6, 1.0, informative)
    base = rng.normal(0.0, BASELINE_SCALE, size=channels)
    out = base[None, :] + gain * q30[:, None] * weights[None, :]
    if noise > 0:
        out = out + noise * 0.15 * rng.normal(size=(n30, channels))
        slow = _ou(rng, n30, channels - informative, noise * 3.0, 2.0, 1.0 / MOTION_RATE)
        out[:, informative:] += slow + noise * 1.0 * rng.normal(size=(n30, channels - informative))
    return out


def _frame_stream(rng, spec, c, q30, u, t30):
    """Content strongly, severity weakly, plus a per-subject signature.

    The severity block is weak relative to its noise, so the content dims
    dominate what plain label supervision can extract from video; the
    sensor-side embeddings carry the severity cleanly, which is what the
    alignment objective transfers into the video encoder.
    """
    f_dim = spec.feature_dim
    n30 = len(q30)
    c30 = np.repeat(c, MOTION_RATE)
    frames = np.zeros((n30, f_dim))
    pat = np.random.default_rng(np.random.SeedSequence([spec.seed, _CONTENT_STREAM, 7]))
    p_content = pat.normal(0.0, 1.0, size=32)
    p_severity = pat.normal(0.0, 1.0, size=16)
    frames[:, 0:32] = VIDEO_CONTENT_GAIN * c30[:, None] * p_content[None, :]
    frames[:, 0:32] += 0.15 * np.sin(2 * np.pi * 0.5 * t30[:, None] + np.arange(32)[None, :])
    frames[:, 32:48] = VIDEO_SEVERITY_GAIN * q30[:, None] * p_severity[None, :]
    if spec.noise > 0:
        # slow wander on the severity block: it cannot be averaged away
        # within a clip, so plain label supervision struggles to isolate
        # the block, while the dense sensor-side regression target can
        slow = _ou(rng, len(q30) // MOTION_RATE, 16, spec.noise * 0.35, 12.0, 1.0)
        frames[:, 32:48] += np.repeat(slow, MOTION_RATE, axis=0)
        frames[:, 64:] += spec.noise * 1.0 * rng.normal(size=(n30, f_dim - 64))
    return frames


def recover_labels(rec: SubjectRecording, spec: SyntheticSpec, index: int) -> np.ndarray:
    """Invert the planted EDA pattern: level = round(10 * (EDA - base) / gain).

    Exact at noise 0 because the planted values sit on the level grid and
    the rounding tolerance (half a level) dwarfs float32 error.
    """
    base = _eda_baseline(spec, index)
    q_hat = (rec.phy[:, 0].astype(np.float64) - base) / EDA_GAIN
    return np.clip(np.round(10.0 * q_hat).astype(int), LABEL_MIN, LABEL_MAX)


# -- preprocessing ---------------------------------------------------------


def downsample_motion(stream: np.ndarray, interval: int = MOTION_RATE) -> np.ndarray:
    """Per-interval (mean, std) features: [L, C] at 30 Hz -> [L//interval, 2C].

    Population std; the trailing partial interval is dropped. Output
    columns are the per-channel means followed by the per-channel stds.
    """
    stream = np.asarray(stream)
    if stream.ndim != 2:
        raise DataError(f"downsample_motion expects [L, C], got {stream.shape}")
    if interval < 1:
        raise DataError(f"interval must be >= 1, got {interval}")
    n = stream.shape[0] // interval
    if n == 0:
        raise DataError(
            f"stream of {stream.shape[0]} samples is shorter than one interval ({interval})")
    chunks = stream[:n * interval].reshape(n, interval, stream.shape[1])
    means = chunks.mean(axis=1)
    stds = chunks.std(axis=1)  # population convention (ddof 0)
    return np.concatenate([means, stds], axis=1).astype(stream.dtype)


@dataclass
class WindowSet:
    """Aligned sliding windows over one recording (all streams at 1 Hz)."""
    subject_id: str
    eye: np.ndarray     # [W, T, 38]
    head: np.ndarray    # [W, T, 12]
    phy: np.ndarray     # [W, T, 3]
    clips: np.ndarray   # [W, T_seg, F]
    labels: np.ndarray  # [W]
    starts: np.ndarray  # [W] window start second

    def __len__(self):
        return len(self.labels)


def make_windows(rec: SubjectRecording, window: int, stride: int,
                 segments: int = 8, clip_seconds: int = 2) -> WindowSet:
    """Slide a window of ``window`` seconds with the given stride.

    Each window is labelled by the label at its final second. The clip for
    a window covers the final ``clip_seconds`` of the window (the video
    buffer available at prediction time) and samples one frame-feature
    vector at the centre of each of ``segments`` uniform temporal segments.
    """
    if window < 1 or stride < 1:
        raise DataError(f"window and stride must be >= 1, got {window}, {stride}")
    clip_seconds = min(clip_seconds, window)
    if clip_seconds < 1:
        raise DataError(f"clip_seconds must be >= 1, got {clip_seconds}")
    rec.validate()
    eye_ds = downsample_motion(rec.eye)
    head_ds = downsample_motion(rec.head)
    eye_nodes = eye_ds[:, :EYE_CHANNELS]     # per-channel means
    head_nodes = head_ds[:, :HEAD_CHANNELS]
    length = min(len(eye_nodes), len(head_nodes), len(rec.phy), len(rec.labels),
                 len(rec.frames) // MOTION_RATE)
    if window > length:
        raise DataError(
            f"window of {window} s exceeds usable recording length {length} s")
    count = (length - window) // stride + 1
    starts = np.arange(count) * stride

    eye_w = np.stack([eye_nodes[a:a + window] for a in starts])
    head_w = np.stack([head_nodes[a:a + window] for a in starts])
    phy_w = np.stack([rec.phy[a:a + window] for a in starts])
    labels = rec.labels[starts + window - 1]

    clip_frames = clip_seconds * MOTION_RATE
    clip_start = (window * MOTION_RATE) - clip_frames
    seg_offsets = clip_start + ((np.arange(segments) + 0.5)
                                * clip_frames / segments).astype(int)
    clip_idx = starts[:, None] * MOTION_RATE + seg_offsets[None, :]
    clips = rec.frames[clip_idx]

    return WindowSet(rec.subject_id, eye_w, head_w, phy_w, clips,
                     labels.astype(np.int64), starts)


# -- directory ingestion ----------------------------------------------------

_STREAM_FILES = {"eye": "eye.csv", "head": "head.csv", "phy": "phy.csv"}
_CHANNEL_NAMES = {
    "eye": [f"eye_{i:02d}" for i in range(EYE_CHANNELS)],
    "head": [f"head_{i:02d}" for i in range(HEAD_CHANNELS)],
    "phy": ["eda", "bvp", "skt"],
}


def save_recording(rec: SubjectRecording, root):
    """Write the subject directory layout under ``root``."""
    rec.validate()
    d = os.path.join(root, f"subject_{rec.subject_id}")
    os.makedirs(d, exist_ok=True)
    for name in _STREAM_FILES:
        stream = getattr(rec, name)
        path = os.path.join(d, _STREAM_FILES[name])
        header = ",".join(_CHANNEL_NAMES[name])
        np.savetxt(path, stream, fmt="%.9g", delimiter=",", header=header, comments="")
    save_clip(os.path.join(d, "frames.ptgv"), rec.frames)
    times = np.arange(len(rec.labels), dtype=float)
    np.savetxt(os.path.join(d, "labels.csv"),
               np.column_stack([times, rec.labels.astype(float)]),
               fmt="%.9g", delimiter=",", header="time_s,label", comments="")
    return d


def load_recording(path) -> SubjectRecording:
    """Read one subject directory; schema violations raise SchemaError."""
    streams = {}
    for name, fname in _STREAM_FILES.items():
        fpath = os.path.join(path, fname)
        if not os.path.exists(fpath):
            raise SchemaError(f"{path}: missing stream file {fname}")
        streams[name] = np.loadtxt(fpath, delimiter=",", skiprows=1,
                                   dtype=np.float32, ndmin=2)
    fpath = os.path.join(path, "frames.ptgv")
    if not os.path.exists(fpath):
        raise SchemaError(f"{path}: missing stream file frames.ptgv")
    frames = load_clip(fpath)
    lpath = os.path.join(path, "labels.csv")
    if not os.path.exists(lpath):
        raise SchemaError(f"{path}: missing labels.csv")
    label_rows = np.loadtxt(lpath, delimiter=",", skiprows=1, ndmin=2)
    base = os.path.basename(os.path.normpath(path))
    subject_id = base[len("subject_"):] if base.startswith("subject_") else base
    return SubjectRecording(
        subject_id=subject_id,
        eye=streams["eye"],
        head=streams["head"],
        phy=streams["phy"],
        frames=frames,
        labels=label_rows[:, 1].astype(np.int64),
    ).validate()


def load_dataset(root) -> list:
    dirs = sorted(d for d in os.listdir(root) if d.startswith("subject_"))
    if not dirs:
        raise DataError(f"no subject_* directories under {root}")
    return [load_recording(os.path.join(root, d)) for d in dirs]
