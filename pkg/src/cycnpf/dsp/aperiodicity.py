"""Three-band coded aperiodicity from per-band spectral flatness."""

from __future__ import annotations

import numpy as np

from .stft import stft_magnitude

BAND_EDGES_HZ = ((0.0, 3000.0), (3000.0, 8000.0), (8000.0, 12000.0))
SILENT_VALUE = 1.0  # all-zero bands count as maximally aperiodic
POWER_FLOOR = 1e-20


def band_flatness(power: np.ndarray, freqs: np.ndarray, bands=BAND_EDGES_HZ) -> np.ndarray:
    """Geometric over arithmetic mean of power in each band, ``[num_frames, len(bands)]``."""
    out = np.empty((power.shape[0], len(bands)))
    for b, (lo, hi) in enumerate(bands):
        sel = (freqs >= lo) & (freqs < hi) if b < len(bands) - 1 else (freqs >= lo) & (freqs <= hi)
        p = power[:, sel]
        arith = p.mean(axis=1)
        geo = np.exp(np.log(np.maximum(p, POWER_FLOOR)).mean(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            flat = np.where(arith > POWER_FLOOR, geo / arith, SILENT_VALUE)
        out[:, b] = np.clip(flat, 0.0, 1.0)
    return out


def band_aperiodicity(wave, hop_size: int = 120, fft_size: int = 1024, win_size: int = 600,
                      sample_rate: int | None = None) -> np.ndarray:
    sr = sample_rate or getattr(wave, "sample_rate", 24000)
    spec = stft_magnitude(wave, fft_size, hop_size, win_size)
    freqs = np.arange(fft_size // 2 + 1) * sr / fft_size
    return band_flatness(spec.frames**2, freqs)
