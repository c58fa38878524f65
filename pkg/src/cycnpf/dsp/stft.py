"""Short-time Fourier analysis with a fixed centering convention.

Signals are reflect-padded by ``win_size // 2`` on both sides, so a signal of
``n`` samples yields ``(n + 2 * (win_size // 2) - win_size) // hop_size + 1``
frames. Frame ``t`` is centred on sample ``t * hop_size``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window


class EmptySpectrogramError(ValueError):
    """Raised when a signal is too short to produce a single frame."""


@dataclass(frozen=True)
class Spectrogram:
    frames: np.ndarray  # [num_frames, fft_size // 2 + 1], non-negative
    fft_size: int
    hop_size: int
    win_size: int

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.fft_size // 2 + 1:
            raise ValueError(
                f"frames shape {self.frames.shape} inconsistent with fft_size {self.fft_size}"
            )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def hann(win_size: int) -> np.ndarray:
    return get_window("hann", win_size, fftbins=True)


def check_resolution(fft_size: int, hop_size: int, win_size: int) -> None:
    if not fft_size >= win_size >= hop_size >= 1:
        raise ValueError(
            f"need fft_size >= win_size >= hop_size >= 1, got {fft_size}, {win_size}, {hop_size}"
        )
    if fft_size & (fft_size - 1):
        raise ValueError(f"fft_size must be a power of two, got {fft_size}")


def num_frames(length: int, hop_size: int, win_size: int) -> int:
    pad = win_size // 2
    return (length + 2 * pad - win_size) // hop_size + 1


def frame_indices(length: int, hop_size: int, win_size: int) -> np.ndarray:
    """Index matrix into the padded signal, shape [num_frames, win_size]."""
    n = num_frames(length, hop_size, win_size)
    return np.arange(n)[:, None] * hop_size + np.arange(win_size)[None, :]


def frame_signal(x: np.ndarray, hop_size: int, win_size: int) -> np.ndarray:
    """Centre-pad and slice ``x`` (last axis) into overlapping frames."""
    if x.shape[-1] < win_size:
        raise EmptySpectrogramError(
            f"signal of {x.shape[-1]} samples is shorter than one {win_size}-sample frame"
        )
    pad = win_size // 2
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    padded = np.pad(x, widths, mode="reflect")
    return padded[..., frame_indices(x.shape[-1], hop_size, win_size)]


def stft_complex(x: np.ndarray, fft_size: int, hop_size: int, win_size: int) -> np.ndarray:
    frames = frame_signal(np.asarray(x, dtype=np.float64), hop_size, win_size)
    return np.fft.rfft(frames * hann(win_size), n=fft_size, axis=-1)


def stft_magnitude(wave, fft_size: int = 1024, hop_size: int = 120, win_size: int = 600) -> Spectrogram:
    """Hann-windowed STFT magnitude of a :class:`Waveform` or raw sample array."""
    check_resolution(fft_size, hop_size, win_size)
    samples = getattr(wave, "samples", wave)
    mag = np.abs(stft_complex(samples, fft_size, hop_size, win_size))
    return Spectrogram(mag, fft_size, hop_size, win_size)
