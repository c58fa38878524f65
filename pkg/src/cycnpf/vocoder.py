"""Pieces shared by the two vocoders: conditioning, schema guard, batching."""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .dsp.features import COND_DIM, FeatureSequence

FEATURE_SCHEMA = {
    "streams": ["mcep_c1_c45", "log_f0", "uv", "coded_ap3"],
    "cond_dim": COND_DIM,
}


class TrainingAborted(RuntimeError):
    pass


class SchemaMismatch(ValueError):
    pass


def schema_hash(hop_size: int, sample_rate: int) -> str:
    blob = json.dumps({**FEATURE_SCHEMA, "hop": hop_size, "rate": sample_rate}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def features_schema_hash(features: FeatureSequence) -> str:
    return schema_hash(features.hop_size, features.sample_rate)


def upsample_conditioning(features, hop_size: int | None = None) -> np.ndarray:
    """Nearest-frame hold: each frame row repeated ``hop_size`` times."""
    cond = features.conditioning() if isinstance(features, FeatureSequence) else np.asarray(features)
    if isinstance(features, FeatureSequence):
        if hop_size is not None and hop_size != features.hop_size:
            raise ValueError(f"hop {hop_size} does not match feature hop {features.hop_size}")
        hop_size = features.hop_size
    return np.repeat(cond, hop_size, axis=0)


class CondNormalizer:
    """Per-dimension z-score of the 50-dim conditioning view."""

    def __init__(self, mean=None, std=None):
        self.mean = np.zeros(COND_DIM) if mean is None else np.asarray(mean, dtype=np.float32).astype(np.float64)
        self.std = np.ones(COND_DIM) if std is None else np.asarray(std, dtype=np.float32).astype(np.float64)

    @classmethod
    def fit(cls, feature_list) -> "CondNormalizer":
        frames = np.concatenate([f.conditioning() for f in feature_list], axis=0)
        std = frames.std(axis=0)
        std[std < 1e-8] = 1.0
        # float32-representable so a reloaded checkpoint behaves identically
        return cls(frames.mean(axis=0).astype(np.float32), std.astype(np.float32))

    def __call__(self, cond):
        return (cond - self.mean) / self.std


def target_samples(features: FeatureSequence, wave) -> np.ndarray:
    """Waveform samples matched to ``num_frames * hop`` (zero-padded if short)."""
    n = features.num_frames * features.hop_size
    x = np.asarray(getattr(wave, "samples", wave), dtype=np.float64)[:n]
    return np.pad(x, (0, n - x.size))


class SegmentSampler:
    """Random fixed-length (features, waveform) excerpts aligned on frame boundaries."""

    def __init__(self, pairs, segment_frames: int, rng: np.random.Generator, normalizer: CondNormalizer):
        if not pairs:
            raise ValueError("empty vocoder dataset")
        self.rng = rng
        self.hop = pairs[0][0].hop_size
        self.items = [(normalizer(f.conditioning()), target_samples(f, w)) for f, w in pairs]
        shortest = min(c.shape[0] for c, _ in self.items)
        self.segment_frames = max(1, min(segment_frames, shortest))

    def batch(self, batch_size: int):
        """``(cond[B, T, 50], wave[B, T])`` with ``T = segment_frames * hop``."""
        conds, waves = [], []
        for _ in range(batch_size):
            cond, wave = self.items[int(self.rng.integers(len(self.items)))]
            start = int(self.rng.integers(cond.shape[0] - self.segment_frames + 1))
            seg = cond[start : start + self.segment_frames]
            conds.append(np.repeat(seg, self.hop, axis=0))
            lo = start * self.hop
            waves.append(wave[lo : lo + self.segment_frames * self.hop])
        return np.stack(conds), np.stack(waves)
