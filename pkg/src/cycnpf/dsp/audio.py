"""Waveform container and PCM16 WAV I/O."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly


@dataclass(frozen=True)
class Waveform:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = 24000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise ValueError("waveform samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @classmethod
    def clipped(cls, samples, sample_rate=24000) -> "Waveform":
        return cls(np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0), sample_rate)


def resample(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    """Rational-ratio resampling with scipy's Kaiser-windowed sinc FIR (beta 5.0)."""
    if src_rate == dst_rate:
        return np.asarray(samples, dtype=np.float64).copy()
    ratio = Fraction(dst_rate, src_rate)
    return resample_poly(samples, ratio.numerator, ratio.denominator, window=("kaiser", 5.0))


def read_wav(path, sample_rate: int | None = None) -> Waveform:
    """Read a PCM16 mono WAV; optionally resample to ``sample_rate``."""
    rate, data = wavfile.read(str(path))
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected PCM16, got {data.dtype}")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    x = data.astype(np.float64) / 32768.0
    if sample_rate is not None and sample_rate != rate:
        x = resample(x, rate, sample_rate)
        rate = sample_rate
    return Waveform.clipped(x, int(rate))


def write_wav(path, wave: Waveform) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype("<i2")
    wavfile.write(str(path), wave.sample_rate, pcm)
