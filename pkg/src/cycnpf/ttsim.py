"""Low-cost TTS stand-in: degrade natural features into "synthetic" ones.

Two controlled degradations model what a statistical TTS system does to its
output features: over-smoothing (acoustic mismatch) and small timing
deviations inside each speech unit (temporal mismatch). Also here: the
classic cepstral-emphasis post-filter and pitch/formant speaker variants used
for vocoder pretraining.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import resample as fft_resample

from .dsp.audio import Waveform
from .dsp.mcep import DEFAULT_ALPHA, cosine_basis
from .dsp.stft import hann


@dataclass(frozen=True)
class DegradationProfile:
    name: str = "default"
    smooth_kernel_len: int = 5
    gv_scale: float = 0.6
    jitter_max: int = 2
    jitter_segment_len: int = 12
    duration_mode: str = "oracle"
    noise_floor: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gv_scale <= 1:
            raise ValueError(f"gv_scale must lie in (0, 1], got {self.gv_scale}")
        if self.jitter_max < 0:
            raise ValueError("jitter_max must be >= 0")
        if self.smooth_kernel_len < 1 or self.smooth_kernel_len % 2 == 0:
            raise ValueError("smooth_kernel_len must be odd and >= 1")
        if self.duration_mode not in ("oracle", "predicted"):
            raise ValueError(f"duration_mode must be 'oracle' or 'predicted', got {self.duration_mode!r}")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be >= 0")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def oversmooth(mcep, smooth_kernel_len: int = 5, gv_scale: float = 0.6, noise_floor: float = 0.0,
               seed: int = 0) -> np.ndarray:
    """Temporal moving average, variance shrink toward the mean, then seeded noise."""
    x = np.asarray(mcep, dtype=np.float64)
    if smooth_kernel_len > 1:
        x = uniform_filter1d(x, smooth_kernel_len, axis=0, mode="nearest")
    else:
        x = x.copy()
    if gv_scale != 1.0:
        mu = x.mean(axis=0)
        x = mu + gv_scale * (x - mu)
    if noise_floor > 0:
        x = x + np.random.default_rng(seed).normal(0.0, noise_floor, size=x.shape)
    return x


def energy_segments(energy, segment_len: int) -> np.ndarray:
    """Pseudo-phoneme boundaries: a regular grid snapped to local energy valleys.

    Returns boundaries ``[0, b_1, ..., T]``; each interior boundary is moved to
    the lowest-energy frame within a quarter segment of its grid position.
    """
    energy = np.asarray(energy, dtype=np.float64)
    t = energy.size
    reach = max(segment_len // 4, 0)
    bounds = [0]
    for grid in range(segment_len, t - segment_len // 2, segment_len):
        lo, hi = max(grid - reach, bounds[-1] + 1), min(grid + reach, t - 1)
        if lo > hi:
            continue
        bounds.append(lo + int(np.argmin(energy[lo : hi + 1])))
    bounds.append(t)
    return np.array(bounds)


def _segment_index(src_bounds, dst_bounds) -> np.ndarray:
    """Frame index map sending each destination segment linearly onto its source segment."""
    index = []
    for s0, s1, d0, d1 in zip(src_bounds[:-1], src_bounds[1:], dst_bounds[:-1], dst_bounds[1:]):
        n_dst = d1 - d0
        if n_dst <= 0:
            continue
        pos = s0 + (np.arange(n_dst) + 0.5) * ((s1 - s0) / n_dst) - 0.5
        index.append(np.clip(np.round(pos), s0, s1 - 1).astype(np.int64))
    return np.concatenate(index)


def time_jitter(features, jitter_segment_len: int = 12, jitter_max: int = 2, duration_mode: str = "oracle",
                seed: int = 0, energy=None):
    """Perturb timing inside pseudo-phoneme segments.

    ``oracle``: interior boundaries move by a uniform integer in
    ``[-jitter_max, jitter_max]`` and each segment is linearly re-timed, so the
    total length is unchanged. ``predicted``: each segment length is also
    scaled by a seeded factor in [0.8, 1.25], changing the total length.
    ``features`` may be a :class:`FeatureSequence` or a frame array; ``energy``
    defaults to the c0 track of a feature sequence (or the frame norm).
    """
    if not jitter_max < jitter_segment_len / 2:
        raise ValueError(f"jitter_max {jitter_max} must be < jitter_segment_len/2 = {jitter_segment_len / 2}")
    if duration_mode not in ("oracle", "predicted"):
        raise ValueError(f"unknown duration_mode {duration_mode!r}")
    is_seq = hasattr(features, "num_frames")
    n = features.num_frames if is_seq else len(features)
    if jitter_max == 0 and duration_mode == "oracle":
        return features.take(np.arange(n)) if is_seq else np.array(features, copy=True)
    if energy is None:
        energy = features.c0 if is_seq else np.linalg.norm(np.asarray(features).reshape(n, -1), axis=1)
    rng = np.random.default_rng(seed)
    src = energy_segments(energy, jitter_segment_len)
    dst = src.copy()
    for k in range(1, len(dst) - 1):
        shift = int(rng.integers(-jitter_max, jitter_max + 1)) if jitter_max else 0
        lo, hi = dst[k - 1] + 1, src[k + 1] - 1
        dst[k] = int(np.clip(src[k] + shift, lo, max(lo, hi)))
    if duration_mode == "predicted":
        lengths = np.diff(dst).astype(np.float64)
        factors = rng.uniform(0.8, 1.25, size=lengths.size)
        new_lengths = np.maximum(1, np.round(lengths * factors)).astype(np.int64)
        dst = np.concatenate([[0], np.cumsum(new_lengths)])
    index = _segment_index(src, dst)
    return features.take(index) if is_seq else np.asarray(features)[index]


def conventional_postfilter(mcep, beta: float = 0.4, alpha: float = DEFAULT_ALPHA, fft_size: int = 1024):
    """Cepstral emphasis: scale c2.. by ``1 + beta`` and keep the frame's mean log envelope.

    ``mcep`` includes c0 in column 0. The mean over linear FFT bins of the log
    envelope is linear in the coefficients, so c0 absorbs the change exactly.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    c = np.asarray(mcep, dtype=np.float64)
    out = c.copy()
    if beta == 0 or c.shape[1] < 3:
        return out
    out[:, 2:] *= 1.0 + beta
    weights = cosine_basis(c.shape[1], alpha, fft_size).mean(axis=0)  # mean of each basis column
    out[:, 0] -= (out[:, 2:] - c[:, 2:]) @ weights[2:]
    return out


# speaker variants ----------------------------------------------------------

_PV_FFT = 1024
_PV_HOP = 256


def _stft(x, n_fft=_PV_FFT, hop=_PV_HOP):
    win = hann(n_fft)
    pad = n_fft // 2
    xp = np.pad(x, (pad, pad + n_fft))
    n_frames = (len(x) + pad) // hop + 1
    idx = np.arange(n_frames)[:, None] * hop + np.arange(n_fft)[None, :]
    return np.fft.rfft(xp[idx] * win, axis=1)


def _istft(spec, length, n_fft=_PV_FFT, hop=_PV_HOP):
    win = hann(n_fft)
    frames = np.fft.irfft(spec, n_fft, axis=1) * win
    total = (spec.shape[0] - 1) * hop + n_fft
    out = np.zeros(total)
    norm = np.zeros(total)
    for t, frame in enumerate(frames):
        out[t * hop : t * hop + n_fft] += frame
        norm[t * hop : t * hop + n_fft] += win**2
    out /= np.maximum(norm, 1e-8)
    pad = n_fft // 2
    out = out[pad : pad + length]
    return np.pad(out, (0, max(0, length - out.size)))


def phase_vocoder_stretch(x, factor: float) -> np.ndarray:
    """Time-stretch by ``factor`` (> 1 lengthens) keeping pitch."""
    spec = _stft(x)
    n_bins = spec.shape[1]
    advance = 2 * np.pi * _PV_HOP * np.arange(n_bins) / _PV_FFT
    steps = np.arange(0, spec.shape[0] - 1, 1.0 / factor)
    spec = np.concatenate([spec, np.zeros((1, n_bins))], axis=0)
    phase = np.angle(spec[0])
    out = np.empty((steps.size, n_bins), dtype=complex)
    for k, step in enumerate(steps):
        i = int(step)
        frac = step - i
        mag = (1 - frac) * np.abs(spec[i]) + frac * np.abs(spec[i + 1])
        out[k] = mag * np.exp(1j * phase)
        dphi = np.angle(spec[i + 1]) - np.angle(spec[i]) - advance
        dphi -= 2 * np.pi * np.round(dphi / (2 * np.pi))
        phase = phase + advance + dphi
    return _istft(out, int(round(len(x) * factor)))


def _warp_envelope(x, ratio: float, lifter: int = 30) -> np.ndarray:
    """Scale formant frequencies by ``ratio`` while keeping the excitation."""
    spec = _stft(x)
    log_mag = np.log(np.maximum(np.abs(spec), 1e-10))
    ceps = np.fft.irfft(log_mag, axis=1)
    ceps[:, lifter:-lifter] = 0.0
    env = np.fft.rfft(ceps, axis=1).real
    bins = np.arange(spec.shape[1])
    warped = np.stack([np.interp(bins / ratio, bins, row) for row in env])
    return _istft(spec * np.exp(warped - env), len(x))


def make_speaker_variant(wave: Waveform, pitch_shift_semitones: float = 0.0, formant_scale: float = 1.0) -> Waveform:
    """Pseudo-speaker: pitch shift by resample + re-stretch, then envelope warp.

    Resampling scales pitch and formants together by ``2**(shift/12)``; the
    envelope warp then sets the overall formant scaling to ``formant_scale``.
    """
    if abs(pitch_shift_semitones) > 6:
        raise ValueError("pitch shift limited to +-6 semitones")
    if not 0.85 <= formant_scale <= 1.15:
        raise ValueError("formant_scale must lie in [0.85, 1.15]")
    x = wave.samples.copy()
    n = x.size
    changed = False
    ratio = 2.0 ** (pitch_shift_semitones / 12.0)
    if pitch_shift_semitones != 0:
        stretched = phase_vocoder_stretch(x, ratio)
        x = fft_resample(stretched, n)
        changed = True
    correction = formant_scale / ratio
    if not np.isclose(correction, 1.0, rtol=0, atol=1e-12):
        x = _warp_envelope(x, correction)
        changed = True
    if changed:
        peak = np.max(np.abs(x))
        target = min(np.max(np.abs(wave.samples)), 0.99)
        if peak > 0:
            x = x * (target / peak)
    return Waveform.clipped(x, wave.sample_rate)
