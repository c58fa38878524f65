import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cycnpf.dsp import extract_f0, mcep_to_log_envelope
from cycnpf.metrics import global_variance
from cycnpf.ttsim import (
    DegradationProfile,
    conventional_postfilter,
    energy_segments,
    make_speaker_variant,
    oversmooth,
    time_jitter,
)

from conftest import harmonic_clip


@given(st.floats(0.1, 1.0), st.integers(0, 1000))
def test_variance_shrink_is_exact_without_smoothing(scale, seed):
    x = np.random.default_rng(seed).normal(size=(40, 6))
    y = oversmooth(x, smooth_kernel_len=1, gv_scale=scale)
    assert np.allclose(global_variance(y), scale**2 * global_variance(x))
    assert np.allclose(y.mean(axis=0), x.mean(axis=0))


def test_oversmooth_lowers_gv_and_is_seeded():
    x = np.random.default_rng(0).normal(size=(200, 45))
    y = oversmooth(x, 5, 0.6, 0.02, seed=3)
    assert np.all(global_variance(y) < global_variance(x))
    assert np.array_equal(y, oversmooth(x, 5, 0.6, 0.02, seed=3))
    assert not np.array_equal(y, oversmooth(x, 5, 0.6, 0.02, seed=4))


def test_identity_settings_leave_features_unchanged():
    x = np.random.default_rng(1).normal(size=(30, 4))
    assert np.array_equal(oversmooth(x, 1, 1.0, 0.0), x)
    assert np.array_equal(time_jitter(x, 12, 0, "oracle"), x)


def test_profile_validation():
    with pytest.raises(ValueError):
        DegradationProfile(gv_scale=0.0)
    with pytest.raises(ValueError):
        DegradationProfile(smooth_kernel_len=4)
    with pytest.raises(ValueError):
        DegradationProfile(duration_mode="guess")
    assert DegradationProfile().digest() == DegradationProfile().digest()
    assert DegradationProfile(seed=1).digest() != DegradationProfile().digest()


def test_jitter_bound_must_fit_segment():
    with pytest.raises(ValueError):
        time_jitter(np.zeros((50, 2)), jitter_segment_len=4, jitter_max=2)


@given(st.integers(30, 200), st.integers(0, 3), st.integers(0, 10_000))
def test_oracle_jitter_keeps_length_and_order(n, jmax, seed):
    frames = np.arange(n, dtype=np.float64)[:, None] + np.random.default_rng(seed).random((n, 1)) * 0.1
    out = time_jitter(frames, 12, jmax, "oracle", seed=seed)
    assert out.shape == frames.shape
    src = np.searchsorted(frames[:, 0], out[:, 0])
    assert np.all(np.diff(src) >= 0)
    assert src[0] == 0 and src[-1] == n - 1
    assert np.all(np.abs(src - np.arange(n)) <= 2 * jmax + 1)


def test_predicted_durations_change_length_mostly():
    changed = 0
    for seed in range(20):
        x = np.random.default_rng(seed).normal(size=(160, 3))
        changed += time_jitter(x, 12, 2, "predicted", seed=seed).shape[0] != 160
    assert changed >= 10


def test_energy_segments_cover_sequence():
    e = np.random.default_rng(0).random(100)
    b = energy_segments(e, 12)
    assert b[0] == 0 and b[-1] == 100
    assert np.all(np.diff(b) > 0)


def test_postfilter_keeps_mean_log_envelope():
    rng = np.random.default_rng(2)
    c = rng.normal(scale=0.2, size=(5, 46))
    pf = conventional_postfilter(c, beta=0.4)
    assert np.allclose(mcep_to_log_envelope(pf).mean(axis=1), mcep_to_log_envelope(c).mean(axis=1), atol=1e-9)
    assert np.array_equal(pf[:, 1], c[:, 1])
    assert np.allclose(pf[:, 2:], 1.4 * c[:, 2:])
    assert np.array_equal(conventional_postfilter(c, beta=0.0), c)


def test_postfilter_rejects_negative_beta():
    with pytest.raises(ValueError):
        conventional_postfilter(np.zeros((1, 46)), beta=-0.1)


def test_speaker_variant_shifts_pitch_and_keeps_length():
    wave = harmonic_clip(0.6, f0=120.0, harmonics=10)
    up = make_speaker_variant(wave, pitch_shift_semitones=2.0, formant_scale=1.0)
    assert len(up) == len(wave)
    track = extract_f0(up)
    f0 = np.exp(np.median(track.log_f0[track.uv > 0.5]))
    assert abs(f0 / (120.0 * 2 ** (2 / 12)) - 1) < 0.03


def test_speaker_variant_limits():
    wave = harmonic_clip(0.2)
    with pytest.raises(ValueError):
        make_speaker_variant(wave, pitch_shift_semitones=7)
    with pytest.raises(ValueError):
        make_speaker_variant(wave, formant_scale=1.3)
    same = make_speaker_variant(wave)
    assert np.array_equal(same.samples, wave.samples)
