"""Utterance sources: WAV directories and a seeded pseudo-speech synthesiser.

The synthesiser exists so that every stage can run without a recorded
corpus. Each utterance is a chain of pseudo-phones: voiced phones excite a
cascade of formant resonators with a band-limited glottal pulse train,
unvoiced phones excite a fricative-like band with noise. Phone timing, F0
contour and formant targets vary per utterance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dsp.audio import Waveform, read_wav

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Phone:
    voiced: bool
    formants: tuple  # Hz
    bandwidths: tuple  # Hz
    gain: float


# A small vowel/consonant inventory; formant values loosely follow adult speech.
PHONES = (
    Phone(True, (730, 1090, 2440, 3400), (90, 110, 160, 250), 1.0),  # a
    Phone(True, (270, 2290, 3010, 3700), (60, 100, 170, 250), 0.8),  # i
    Phone(True, (300, 870, 2240, 3300), (60, 90, 150, 250), 0.75),  # u
    Phone(True, (530, 1840, 2480, 3500), (70, 100, 160, 250), 0.9),  # e
    Phone(True, (570, 840, 2410, 3400), (80, 90, 160, 250), 0.9),  # o
    Phone(True, (250, 1200, 2500, 3500), (200, 250, 300, 300), 0.45),  # nasal-like
    Phone(True, (350, 1300, 2700, 3600), (150, 200, 250, 300), 0.5),  # liquid-like
    Phone(False, (4500, 7000, 9000, 10500), (1500, 1800, 2000, 2000), 0.35),  # s-like
    Phone(False, (2500, 4000, 6000, 9000), (1000, 1500, 2000, 2000), 0.3),  # sh-like
    Phone(False, (1500, 3500, 6500, 9500), (2000, 2500, 3000, 3000), 0.2),  # h-like
)


def _resonator(freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a  # unity gain at DC


def synth_utterance(rng: np.random.Generator, seconds: float = 1.0, sample_rate: int = 24000,
                    block: int = 120) -> Waveform:
    """One pseudo-speech utterance of about ``seconds`` length (multiple of ``block``)."""
    n = int(round(seconds * sample_rate / block)) * block
    lead = int(0.04 * sample_rate) // block * block
    # phone sequence with alternating tendencies
    segments = []
    pos = lead
    while pos < n - lead:
        voiced_bias = rng.random() < 0.75
        pool = [i for i, p in enumerate(PHONES) if p.voiced == voiced_bias]
        ph = int(rng.choice(pool))
        dur = int(rng.uniform(0.05, 0.14) * sample_rate) // block * block
        dur = max(block * 4, min(dur, n - lead - pos))
        segments.append((pos, pos + dur, ph))
        pos += dur
    f0_base = rng.uniform(95, 170)
    n_blocks = n // block
    t_blocks = np.arange(n_blocks) / n_blocks
    f0_track = f0_base * (1.1 - 0.2 * t_blocks) * (1 + 0.05 * np.sin(2 * np.pi * rng.uniform(1, 3) * t_blocks
                                                                      + rng.uniform(0, 2 * np.pi)))
    formant_jitter = rng.uniform(0.92, 1.08)
    out = np.zeros(n)
    states = [np.zeros(2) for _ in range(4)]
    phase = 0.0
    glottal_b, glottal_a = np.array([1.0]), np.array([1.0, -0.95])
    g_state = np.zeros(1)
    noise = rng.standard_normal(n)
    # per-block formant targets with short linear transitions
    targets = np.zeros((n_blocks, 4))
    bws = np.ones((n_blocks, 4)) * 200.0
    gains = np.zeros(n_blocks)
    voicing = np.zeros(n_blocks)
    for s0, s1, ph in segments:
        p = PHONES[ph]
        b0, b1 = s0 // block, s1 // block
        targets[b0:b1] = np.array(p.formants) * formant_jitter
        bws[b0:b1] = p.bandwidths
        gains[b0:b1] = p.gain
        voicing[b0:b1] = 1.0 if p.voiced else 0.0
    kernel = np.ones(3) / 3
    for k in range(4):
        targets[:, k] = np.convolve(np.pad(targets[:, k], 1, mode="edge"), kernel, mode="valid")
    gains = np.convolve(np.pad(gains, 2, mode="edge"), np.ones(5) / 5, mode="valid")
    for b in range(n_blocks):
        lo, hi = b * block, (b + 1) * block
        if gains[b] <= 0 and not any(s0 <= lo < s1 for s0, s1, _ in segments):
            out[lo:hi] = 1e-4 * noise[lo:hi]
            continue
        if voicing[b] > 0.5:
            f0 = f0_track[b]
            inc = f0 / sample_rate
            ph = phase + inc * np.arange(1, block + 1)
            pulses = (np.floor(ph) > np.floor(np.concatenate([[phase], ph[:-1]]))).astype(float)
            phase = ph[-1] % 1.0
            src, g_state = lfilter(glottal_b, glottal_a, pulses, zi=g_state)
            src = src - 0.02 * np.mean(src) + 0.02 * noise[lo:hi]
        else:
            src = noise[lo:hi] * 0.3
        y = src
        for k in range(4):
            fb, fa = _resonator(min(targets[b, k], sample_rate / 2 - 500), bws[b, k], sample_rate)
            y, states[k] = lfilter(fb, fa, y, zi=states[k])
        out[lo:hi] = gains[b] * y
    # unvoiced phones sit on a high-frequency band: emphasise them
    out = lfilter([1.0, -0.6], [1.0], out)
    peak = np.max(np.abs(out))
    out = out / peak * rng.uniform(0.4, 0.7) if peak > 0 else out
    return Waveform.clipped(out, sample_rate)


def synth_corpus(num_utterances: int, seconds: float = 1.0, seed: int = 0, sample_rate: int = 24000,
                 block: int = 120):
    """``[(utterance_id, Waveform)]`` with independent per-utterance seeds."""
    out = []
    for i in range(num_utterances):
        rng = np.random.default_rng([seed, i])
        dur = seconds * rng.uniform(0.85, 1.15)
        out.append((f"utt{i:04d}", synth_utterance(rng, dur, sample_rate, block)))
    return out


def load_wav_dir(directory, sample_rate: int = 24000, max_fail_ratio: float = 0.05):
    """Load every ``*.wav`` in ``directory`` (sorted).

    Returns ``(utterances, errors)``. Raises ``ValueError`` if more than
    ``max_fail_ratio`` of the files cannot be read.
    """
    paths = sorted(Path(directory).glob("*.wav"))
    if not paths:
        raise FileNotFoundError(f"no .wav files in {directory}")
    utts, errors = [], []
    for p in paths:
        try:
            utts.append((p.stem, read_wav(p, sample_rate)))
        except Exception as exc:  # corrupt header, wrong format, ...
            errors.append((p.name, str(exc)))
    if errors:
        logger.warning("%d of %d files failed to load", len(errors), len(paths))
    if len(errors) > max_fail_ratio * len(paths):
        raise ValueError(f"{len(errors)} of {len(paths)} WAV files failed: {errors[:5]}")
    return utts, errors
