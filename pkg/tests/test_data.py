"""Preprocessing, windowing, synthetic generation, and directory ingestion."""

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptgnn.data import (SubjectRecording, SyntheticSpec, downsample_motion,
                        generate_synthetic, load_dataset, load_recording,
                        make_windows, planted_levels, recover_labels,
                        save_recording, subject_susceptibility)
from ptgnn.errors import DataError, SchemaError


def small_spec(**kw):
    defaults = dict(n_subjects=2, duration_s=120, noise=0.1, seed=5)
    defaults.update(kw)
    return SyntheticSpec(**defaults)


class TestDownsample:
    def test_constant_channel(self):
        stream = np.full((90, 2), 3.5, dtype=np.float32)
        out = downsample_motion(stream, 30)
        assert out.shape == (3, 4)
        np.testing.assert_allclose(out[:, :2], 3.5, atol=1e-6)  # means
        np.testing.assert_allclose(out[:, 2:], 0.0, atol=1e-6)  # stds

    def test_alternating_unit_signal(self):
        # +1/-1 alternating over 30 samples: mean 0, population std 1
        stream = np.tile(np.array([1.0, -1.0], dtype=np.float32), 15)[:, None]
        out = downsample_motion(stream, 30)
        assert out.shape == (1, 2)
        assert out[0, 0] == pytest.approx(0.0, abs=1e-7)
        assert out[0, 1] == pytest.approx(1.0, abs=1e-6)

    def test_trailing_partial_interval_dropped(self):
        stream = np.arange(59, dtype=np.float32)[:, None]
        out = downsample_motion(stream, 30)
        assert out.shape == (1, 2)
        assert out[0, 0] == pytest.approx(np.mean(np.arange(30)))

    def test_too_short(self):
        with pytest.raises(DataError, match="shorter"):
            downsample_motion(np.zeros((29, 3), dtype=np.float32), 30)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(30, 200), st.integers(1, 4))
    def test_output_length_formula(self, n, c):
        stream = np.random.default_rng(0).normal(size=(n, c)).astype(np.float32)
        out = downsample_motion(stream, 30)
        assert out.shape == (n // 30, 2 * c)


class TestWindows:
    def test_exactly_one_window_when_length_equals_t(self):
        rec = generate_synthetic(small_spec(duration_s=40))[0]
        ws = make_windows(rec, 40, 10)
        assert len(ws) == 1

    def test_count_formula(self):
        # 1 Hz length 120: T=40, stride 20 -> (120-40)/20+1 = 5
        rec = generate_synthetic(small_spec())[0]
        ws = make_windows(rec, 40, 20)
        assert len(ws) == 5

    def test_window_exceeding_recording(self):
        rec = generate_synthetic(small_spec(duration_s=50))[0]
        with pytest.raises(DataError, match="exceeds"):
            make_windows(rec, 60, 10)

    def test_label_taken_at_window_end(self):
        rec = generate_synthetic(small_spec())[0]
        ws = make_windows(rec, 30, 7)
        for i, start in enumerate(ws.starts):
            assert ws.labels[i] == rec.labels[start + 30 - 1]

    def test_window_contents_match_streams(self):
        rec = generate_synthetic(small_spec())[0]
        ws = make_windows(rec, 25, 13)
        eye_ds = downsample_motion(rec.eye)[:, :38]
        last = ws.starts[-1]
        np.testing.assert_allclose(ws.eye[-1], eye_ds[last:last + 25], atol=1e-6)
        np.testing.assert_allclose(ws.phy[-1], rec.phy[last:last + 25], atol=1e-6)

    def test_windows_never_read_past_stream_end(self):
        rec = generate_synthetic(small_spec(duration_s=61))[0]
        ws = make_windows(rec, 30, 10, segments=8, clip_seconds=2)
        assert ws.starts[-1] + 30 <= 61
        # clip indices stay within the frame stream
        assert ws.clips.shape == (len(ws), 8, rec.frames.shape[1])

    def test_clip_samples_window_tail(self):
        rec = generate_synthetic(small_spec())[0]
        ws = make_windows(rec, 30, 10, segments=4, clip_seconds=2)
        start = ws.starts[0]
        tail_frames = rec.frames[(start + 28) * 30:(start + 30) * 30]
        for seg in range(4):
            assert any((ws.clips[0, seg] == f).all() for f in tail_frames)


class TestSynthetic:
    def test_schema_and_determinism(self):
        spec = small_spec()
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert len(a) == 2
        for ra, rb in zip(a, b):
            ra.validate()
            assert ra.eye.tobytes() == rb.eye.tobytes()
            assert ra.frames.tobytes() == rb.frames.tobytes()
            assert ra.labels.tobytes() == rb.labels.tobytes()

    def test_zero_noise_recovery_is_exact(self):
        spec = small_spec(noise=0.0, n_subjects=3)
        for i, rec in enumerate(generate_synthetic(spec)):
            got = recover_labels(rec, spec, i)
            assert (got == rec.labels).all()
            assert (planted_levels(spec, i) == rec.labels).all()

    def test_noisy_recovery_mostly_right(self):
        spec = small_spec(noise=0.1, n_subjects=2)
        for i, rec in enumerate(generate_synthetic(spec)):
            got = recover_labels(rec, spec, i)
            assert (got == rec.labels).mean() > 0.8

    def test_susceptibility_separates_subject_statistics(self):
        spec = SyntheticSpec(n_subjects=10, duration_s=300, noise=0.0, seed=3)
        recs = generate_synthetic(spec)
        us = [subject_susceptibility(spec, i) for i in range(10)]
        hi, lo = int(np.argmax(us)), int(np.argmin(us))
        # stronger susceptibility raises mean electrodermal level
        assert recs[hi].phy[:, 0].mean() > recs[lo].phy[:, 0].mean()

    def test_labels_within_range_and_all_reachable(self):
        spec = SyntheticSpec(n_subjects=10, duration_s=400, noise=0.1, seed=0)
        labels = np.concatenate([r.labels for r in generate_synthetic(spec)])
        assert labels.min() >= 0 and labels.max() <= 10
        assert len(np.unique(labels)) == 11


class TestRecordingIO:
    def test_round_trip(self, tmp_path):
        rec = generate_synthetic(small_spec(duration_s=60))[0]
        save_recording(rec, tmp_path)
        back = load_recording(os.path.join(tmp_path, "subject_s00"))
        assert back.subject_id == rec.subject_id
        np.testing.assert_array_equal(back.eye, rec.eye)
        np.testing.assert_array_equal(back.head, rec.head)
        np.testing.assert_array_equal(back.phy, rec.phy)
        np.testing.assert_array_equal(back.frames, rec.frames)
        np.testing.assert_array_equal(back.labels, rec.labels)

    def test_wrong_channel_count_rejected(self, tmp_path):
        rec = generate_synthetic(small_spec(duration_s=60))[0]
        d = save_recording(rec, tmp_path)
        eye = np.loadtxt(os.path.join(d, "eye.csv"), delimiter=",", skiprows=1)
        header = ",".join(f"eye_{i:02d}" for i in range(37))
        np.savetxt(os.path.join(d, "eye.csv"), eye[:, :37], fmt="%.9g",
                   delimiter=",", header=header, comments="")
        with pytest.raises(SchemaError, match="eye"):
            load_recording(d)

    def test_missing_phy_stream(self, tmp_path):
        rec = generate_synthetic(small_spec(duration_s=60))[0]
        d = save_recording(rec, tmp_path)
        os.remove(os.path.join(d, "phy.csv"))
        with pytest.raises(SchemaError, match="phy"):
            load_recording(d)

    def test_rate_mismatch_names_stream(self, tmp_path):
        rec = generate_synthetic(small_spec(duration_s=60))[0]
        d = save_recording(rec, tmp_path)
        head = np.loadtxt(os.path.join(d, "head.csv"), delimiter=",", skiprows=1)
        header = ",".join(f"head_{i:02d}" for i in range(12))
        np.savetxt(os.path.join(d, "head.csv"), head[:-30], fmt="%.9g",
                   delimiter=",", header=header, comments="")
        with pytest.raises(SchemaError, match="head"):
            load_recording(d)

    def test_load_dataset_sorted(self, tmp_path):
        for rec in generate_synthetic(small_spec(duration_s=60, n_subjects=3)):
            save_recording(rec, tmp_path)
        recs = load_dataset(tmp_path)
        assert [r.subject_id for r in recs] == ["s00", "s01", "s02"]

    def test_empty_dataset_dir(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path)


def test_downsample_then_window_commutes_on_aligned_boundaries():
    rec = generate_synthetic(small_spec(duration_s=90))[0]
    full = downsample_motion(rec.eye)[:, :38]
    # windowing the downsampled stream == downsampling the raw window
    t, start = 20, 30
    raw_window = rec.eye[start * 30:(start + t) * 30]
    np.testing.assert_allclose(downsample_motion(raw_window)[:, :38],
                               full[start:start + t], atol=1e-5)
