"""F0 and voicing from the normalised autocorrelation (NCCF) of short frames."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

ENERGY_FLOOR = 1e-10  # mean-square level below which a frame is silent


@dataclass(frozen=True)
class F0Track:
    log_f0: np.ndarray
    uv: np.ndarray
    no_voiced_frames: bool = False

    def __iter__(self):
        # allows ``log_f0, uv = extract_f0(...)``
        return iter((self.log_f0, self.uv))


def _nccf(frames: np.ndarray, win: int, min_lag: int, max_lag: int) -> np.ndarray:
    """NCCF for lags ``min_lag..max_lag``; ``frames`` has ``win + max_lag`` columns."""
    n_fft = 1 << int(np.ceil(np.log2(2 * frames.shape[1])))
    head = frames[:, :win]
    spec_full = np.fft.rfft(frames, n_fft, axis=1)
    spec_head = np.fft.rfft(head, n_fft, axis=1)
    xcorr = np.fft.irfft(np.conj(spec_head) * spec_full, n_fft, axis=1)
    lags = np.arange(min_lag, max_lag + 1)
    num = xcorr[:, lags]
    sq = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames**2, axis=1)], axis=1)
    e0 = sq[:, win]
    e_lag = sq[:, lags + win] - sq[:, lags]
    denom = np.sqrt(e0[:, None] * e_lag)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, num / denom, 0.0)
    return r


def _pick_lag(r_row: np.ndarray, min_lag: int) -> tuple[float, float]:
    """Smallest-lag local maximum within 90 % of the global peak, parabolically refined."""
    peak = r_row.max()
    if peak <= 0:
        return float("nan"), 0.0
    inner = np.flatnonzero(
        (r_row[1:-1] >= r_row[:-2]) & (r_row[1:-1] >= r_row[2:]) & (r_row[1:-1] >= 0.9 * peak)
    ) + 1
    k = int(inner[0]) if inner.size else int(np.argmax(r_row))
    value = r_row[k]
    offset = 0.0
    if 0 < k < r_row.size - 1:
        a, b, c = r_row[k - 1], r_row[k], r_row[k + 1]
        den = a - 2 * b + c
        if den < 0:
            offset = 0.5 * (a - c) / den
    return min_lag + k + offset, float(value)


def interpolate_unvoiced(log_f0: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Linear interpolation through unvoiced frames; edges hold the nearest voiced value."""
    voiced = np.flatnonzero(uv > 0.5)
    if voiced.size == 0:
        return log_f0.copy()
    return np.interp(np.arange(log_f0.size), voiced, log_f0[voiced])


def extract_f0(wave, f_min: float = 70.0, f_max: float = 400.0, hop_size: int = 120,
               win_ms: float = 35.0, threshold: float = 0.35, sample_rate: int | None = None) -> F0Track:
    """Frame-wise log F0 and U/V decisions.

    Frames are centred on ``t * hop_size`` (reflect padding, same framing as the
    STFT). A frame is voiced when its peak NCCF over the lag range exceeds
    ``threshold``. Unvoiced frames carry a log F0 interpolated from voiced
    neighbours. If nothing is voiced, every frame gets ``log(f_min)`` and
    ``no_voiced_frames`` is set.
    """
    samples = np.asarray(getattr(wave, "samples", wave), dtype=np.float64)
    sr = sample_rate or getattr(wave, "sample_rate", 24000)
    if not 0 < f_min < f_max < sr / 2:
        raise ValueError(f"need 0 < f_min < f_max < sample_rate/2, got {f_min}, {f_max}, {sr}")
    win = int(round(win_ms * 1e-3 * sr))
    min_lag = int(np.floor(sr / f_max))
    max_lag = int(np.ceil(sr / f_min))
    n_frames = samples.size // hop_size + 1
    half = win // 2
    padded = np.pad(samples, (half, half + max_lag + hop_size), mode="constant")
    if samples.size > half:
        padded[:half] = samples[1 : half + 1][::-1]
    idx = np.arange(n_frames)[:, None] * hop_size + np.arange(win + max_lag)[None, :]
    frames = padded[idx]
    frames = frames - frames[:, :win].mean(axis=1, keepdims=True)

    r = _nccf(frames, win, min_lag, max_lag)
    energy = np.mean(frames[:, :win] ** 2, axis=1)
    log_f0 = np.zeros(n_frames)
    uv = np.zeros(n_frames)
    for t in range(n_frames):
        if energy[t] < ENERGY_FLOOR:
            continue
        lag, value = _pick_lag(r[t], min_lag)
        if value > threshold:
            uv[t] = 1.0
            log_f0[t] = np.log(sr / lag)
    if not uv.any():
        logger.warning("no voiced frames found; log F0 set to log(f_min)")
        return F0Track(np.full(n_frames, np.log(f_min)), uv, True)
    return F0Track(interpolate_unvoiced(log_f0, uv), uv, False)
