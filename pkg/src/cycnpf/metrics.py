"""Objective distances between feature sequences and spectra.

Conventions (the reporting harness prints these identifiers next to numbers):

* ``mcd``: ``10 * sqrt(2) / ln 10 * ||c_x - c_y||_2`` over shape coefficients
  c1..c45 (c0 excluded), averaged over aligned frames.
* ``lsd``: per-frame RMS over bins of ``20 log10(|X| / |Y|)``, both
  magnitudes floored at 1e-10, averaged over frames.
* ``lgd``: RMS over coefficients of the natural-log ratio of per-coefficient
  population variances (floored at 1e-12).
"""

from __future__ import annotations

import numpy as np

from .align import dtw_align

MCD_CONST = 10.0 * np.sqrt(2.0) / np.log(10.0)
LSD_FLOOR = 1e-10
GV_FLOOR = 1e-12
CONVENTIONS = {
    "mcd": "mcd/10sqrt2-ln10/c1-c45/frame-mean",
    "lsd": "lsd/20log10/floor1e-10/bin-rms-frame-mean",
    "lgd": "lgd/ln-popvar/floor1e-12/coef-rms",
}


def _as_matrix(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        raise ValueError(f"{name}: empty sequence")
    return x


def mcd(x_mcep, y_mcep, pre_aligned: bool = True, includes_c0: bool = False) -> float:
    """Mel-cepstral distortion in dB.

    Without ``pre_aligned`` the sequences are first aligned by DTW on
    z-scored coefficients.
    """
    x = _as_matrix(x_mcep, "mcd")
    y = _as_matrix(y_mcep, "mcd")
    if includes_c0:
        x, y = x[:, 1:], y[:, 1:]
    if pre_aligned:
        if x.shape != y.shape:
            raise ValueError(f"mcd: pre-aligned inputs differ in shape {x.shape} vs {y.shape}")
    else:
        path = dtw_align(x, y, zscore=True)
        x, y = x[path.pairs[:, 0]], y[path.pairs[:, 1]]
    return float(MCD_CONST * np.mean(np.sqrt(np.sum((x - y) ** 2, axis=1))))


def lsd(x_env, y_env) -> float:
    """Log-spectral distortion (dB) between two magnitude envelopes."""
    x = np.asarray(getattr(x_env, "frames", x_env), dtype=np.float64)
    y = np.asarray(getattr(y_env, "frames", y_env), dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"lsd: shape mismatch {x.shape} vs {y.shape}")
    d = 20.0 * np.log10(np.maximum(x, LSD_FLOOR) / np.maximum(y, LSD_FLOOR))
    return float(np.mean(np.sqrt(np.mean(d**2, axis=1))))


def global_variance(mcep) -> np.ndarray:
    return np.var(np.asarray(mcep, dtype=np.float64), axis=0)


def lgd(x_mcep, y_mcep) -> float:
    """Log global-variance distance over the given coefficients (pass c1..c45)."""
    x = _as_matrix(x_mcep, "lgd")
    y = _as_matrix(y_mcep, "lgd")
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError("lgd: each sequence needs at least 2 frames")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"lgd: dimension mismatch {x.shape[1]} vs {y.shape[1]}")
    gx = np.maximum(global_variance(x), GV_FLOOR)
    gy = np.maximum(global_variance(y), GV_FLOOR)
    return float(np.sqrt(np.mean((np.log(gx) - np.log(gy)) ** 2)))
