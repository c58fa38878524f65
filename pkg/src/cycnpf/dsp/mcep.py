"""Warped-frequency cepstral analysis of magnitude spectra.

The analyser stands in for SPTK-style mel-cepstral analysis:

1. floor the magnitude at ``MAG_FLOOR`` and take the natural log,
2. resample the log spectrum with a cubic spline onto a grid that is uniform
   in the all-pass warped frequency
   ``w~ = w + 2 atan(alpha sin w / (1 - alpha cos w))``,
3. take the DCT-I of the warped log spectrum (the real cepstrum of an even
   spectrum) and keep ``c_0 .. c_order``.

With this convention the log envelope is ``c_0 + 2 * sum_m c_m cos(m w~)``.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dct
from scipy.interpolate import CubicSpline

from .stft import Spectrogram

MAG_FLOOR = 1e-10
DEFAULT_ALPHA = 0.466
DEFAULT_ORDER = 45


def warp_frequency(omega, alpha: float):
    """Map linear frequency (rad, 0..pi) to all-pass warped frequency."""
    omega = np.asarray(omega, dtype=np.float64)
    return omega + 2.0 * np.arctan(alpha * np.sin(omega) / (1.0 - alpha * np.cos(omega)))


def unwarp_frequency(omega_w, alpha: float):
    """Inverse of :func:`warp_frequency` (the all-pass map with ``-alpha``)."""
    return warp_frequency(omega_w, -alpha)


def _check(order: int, alpha: float):
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def mcep_from_magnitude(mag: np.ndarray, order: int = DEFAULT_ORDER, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Cepstral coefficients ``[num_frames, order + 1]`` of magnitude frames."""
    _check(order, alpha)
    mag = np.atleast_2d(np.asarray(mag, dtype=np.float64))
    n_bins = mag.shape[1]
    half = n_bins - 1
    log_mag = np.log(np.maximum(mag, MAG_FLOOR))
    grid = np.linspace(0.0, np.pi, n_bins)
    if alpha == 0.0:
        warped = log_mag
    else:
        spline = CubicSpline(grid, log_mag, axis=1)
        warped = spline(unwarp_frequency(grid, alpha))
    ceps = dct(warped, type=1, axis=1) / (2.0 * half)
    return ceps[:, : order + 1]


def mcep_analyze(spec: Spectrogram, order: int = DEFAULT_ORDER, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    return mcep_from_magnitude(spec.frames, order, alpha)


def cosine_basis(num_coef: int, alpha: float, fft_size: int) -> np.ndarray:
    """``[num_bins, num_coef]`` matrix so that ``log_env = mcep @ basis.T``."""
    grid = np.linspace(0.0, np.pi, fft_size // 2 + 1)
    m = np.arange(num_coef)
    basis = 2.0 * np.cos(np.outer(warp_frequency(grid, alpha), m))
    basis[:, 0] = 1.0
    return basis


def mcep_to_log_envelope(mcep: np.ndarray, alpha: float = DEFAULT_ALPHA, fft_size: int = 1024) -> np.ndarray:
    mcep = np.atleast_2d(np.asarray(mcep, dtype=np.float64))
    if mcep.shape[1] < 1:
        raise ValueError("mcep needs at least one column")
    return mcep @ cosine_basis(mcep.shape[1], alpha, fft_size).T


def mcep_to_envelope(mcep: np.ndarray, alpha: float = DEFAULT_ALPHA, fft_size: int = 1024,
                     hop_size: int = 0, win_size: int = 0) -> Spectrogram:
    """Magnitude envelope on the linear FFT grid for each cepstral frame.

    Evaluating the cosine series at ``warp(w_k)`` for every linear bin ``w_k``
    both evaluates it on the warped grid and unwarps it in one step.
    """
    env = np.exp(mcep_to_log_envelope(mcep, alpha, fft_size))
    return Spectrogram(env, fft_size, hop_size, win_size)
