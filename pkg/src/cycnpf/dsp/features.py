"""Frame-level feature streams and their on-disk format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aperiodicity import band_flatness
from .f0 import extract_f0
from .mcep import DEFAULT_ALPHA, DEFAULT_ORDER, mcep_from_magnitude
from .stft import stft_complex, check_resolution

MAGIC = b"CNPF1"
STREAM_DIMS = (DEFAULT_ORDER + 1, 1, 1, 3)
COND_DIM = DEFAULT_ORDER + 5  # c1..c45, log F0, U/V, 3 coded ap


@dataclass(frozen=True)
class AnalysisConfig:
    sample_rate: int = 24000
    hop_size: int = 120  # 5 ms
    win_size: int = 600  # 25 ms
    fft_size: int = 1024
    order: int = DEFAULT_ORDER
    alpha: float = DEFAULT_ALPHA
    f0_min: float = 70.0
    f0_max: float = 400.0
    f0_win_ms: float = 35.0
    vuv_threshold: float = 0.35


class FrameMismatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeatureSequence:
    mcep: np.ndarray  # [T, order + 1], c0 first
    log_f0: np.ndarray  # [T]
    uv: np.ndarray  # [T], exactly 0 or 1
    coded_ap: np.ndarray  # [T, 3], in [0, 1]
    hop_size: int = 120
    alpha: float = DEFAULT_ALPHA
    sample_rate: int = 24000
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        t = self.mcep.shape[0]
        if not (self.log_f0.shape == (t,) and self.uv.shape == (t,) and self.coded_ap.shape[0] == t):
            raise ValueError(
                f"stream lengths differ: mcep {self.mcep.shape}, log_f0 {self.log_f0.shape}, "
                f"uv {self.uv.shape}, coded_ap {self.coded_ap.shape}"
            )
        if not np.all((self.uv == 0) | (self.uv == 1)):
            raise ValueError("uv must contain only 0 and 1")
        if self.coded_ap.size and (self.coded_ap.min() < 0 or self.coded_ap.max() > 1):
            raise ValueError("coded_ap must lie in [0, 1]")

    @property
    def num_frames(self) -> int:
        return self.mcep.shape[0]

    @property
    def c0(self) -> np.ndarray:
        return self.mcep[:, 0]

    @property
    def mcep_shape(self) -> np.ndarray:
        """Shape coefficients c1..c_order (the converted / compared part)."""
        return self.mcep[:, 1:]

    def conditioning(self) -> np.ndarray:
        """``[T, 50]`` view: c1..c45, log F0, U/V, coded ap."""
        return np.concatenate(
            [self.mcep[:, 1:], self.log_f0[:, None], self.uv[:, None], self.coded_ap], axis=1
        )

    def with_mcep_shape(self, shape: np.ndarray) -> "FeatureSequence":
        shape = np.asarray(shape, dtype=np.float64)
        if shape.shape != self.mcep_shape.shape:
            raise ValueError(f"expected mcep shape {self.mcep_shape.shape}, got {shape.shape}")
        return replace(self, mcep=np.concatenate([self.mcep[:, :1], shape], axis=1))

    def with_mcep(self, mcep: np.ndarray) -> "FeatureSequence":
        return replace(self, mcep=np.asarray(mcep, dtype=np.float64))

    def take(self, index) -> "FeatureSequence":
        """Frame selection (used by warping and time jitter); all streams follow."""
        if not isinstance(index, slice):
            index = np.asarray(index)
        return replace(
            self, mcep=self.mcep[index], log_f0=self.log_f0[index], uv=self.uv[index],
            coded_ap=self.coded_ap[index],
        )

    def equals(self, other: "FeatureSequence") -> bool:
        return (
            self.hop_size == other.hop_size
            and self.sample_rate == other.sample_rate
            and all(
                np.array_equal(a, b)
                for a, b in zip(
                    (self.mcep, self.log_f0, self.uv, self.coded_ap),
                    (other.mcep, other.log_f0, other.uv, other.coded_ap),
                )
            )
        )


def assemble_features(wave, config: AnalysisConfig = AnalysisConfig()) -> FeatureSequence:
    """Analyse a waveform into the four feature streams.

    Streams are truncated to the shortest one and further to
    ``len(wave) // hop_size`` frames so that ``num_frames * hop_size`` never
    exceeds the waveform length.
    """
    samples = np.asarray(getattr(wave, "samples", wave), dtype=np.float64)
    sr = getattr(wave, "sample_rate", config.sample_rate)
    if sr != config.sample_rate:
        raise ValueError(f"waveform rate {sr} != analysis rate {config.sample_rate}")
    check_resolution(config.fft_size, config.hop_size, config.win_size)

    spec = np.abs(stft_complex(samples, config.fft_size, config.hop_size, config.win_size))
    mcep = mcep_from_magnitude(spec, config.order, config.alpha)
    freqs = np.arange(config.fft_size // 2 + 1) * sr / config.fft_size
    ap = band_flatness(spec**2, freqs)
    track = extract_f0(
        samples, config.f0_min, config.f0_max, config.hop_size, config.f0_win_ms,
        config.vuv_threshold, sample_rate=sr,
    )
    lengths = [mcep.shape[0], ap.shape[0], track.log_f0.shape[0]]
    if max(lengths) - min(lengths) > 2:
        raise FrameMismatchError(f"sub-analyser frame counts disagree: {lengths}")
    t = min(min(lengths), samples.size // config.hop_size)
    return FeatureSequence(
        mcep[:t], track.log_f0[:t].copy(), track.uv[:t].copy(), ap[:t],
        config.hop_size, config.alpha, sr, meta={"no_voiced_frames": track.no_voiced_frames},
    )


def save_features(path, feats: FeatureSequence) -> None:
    """Write the binary feature file (magic, u32 header, float32 stream payloads)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dims = (feats.mcep.shape[1], 1, 1, feats.coded_ap.shape[1])
    header = MAGIC + struct.pack("<7I", feats.num_frames, feats.hop_size, feats.sample_rate, *dims)
    streams = (feats.mcep, feats.log_f0[:, None], feats.uv[:, None], feats.coded_ap)
    with open(path, "wb") as fh:
        fh.write(header)
        for s in streams:
            fh.write(np.ascontiguousarray(s, dtype="<f4").tobytes())


def load_features(path, alpha: float = DEFAULT_ALPHA) -> FeatureSequence:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:5]!r}")
    n, hop, sr, *dims = struct.unpack_from("<7I", raw, 5)
    offset = 5 + 28
    streams = []
    for d in dims:
        count = n * d
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(n, d)
        streams.append(arr.astype(np.float64))
        offset += 4 * count
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    mcep, lf0, uv, ap = streams
    return FeatureSequence(mcep, lf0[:, 0], uv[:, 0], ap, hop, alpha, sr)
