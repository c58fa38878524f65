"""Signal analysis primitives: STFT, warped cepstrum, F0, aperiodicity, mu-law."""

from .audio import Waveform, read_wav, resample, write_wav
from .aperiodicity import band_aperiodicity
from .f0 import F0Track, extract_f0
from .features import (
    COND_DIM,
    AnalysisConfig,
    FeatureSequence,
    FrameMismatchError,
    assemble_features,
    load_features,
    save_features,
)
from .mcep import mcep_analyze, mcep_from_magnitude, mcep_to_envelope, mcep_to_log_envelope
from .mulaw import mulaw_decode, mulaw_encode
from .stft import EmptySpectrogramError, Spectrogram, stft_magnitude

__all__ = [
    "AnalysisConfig", "COND_DIM", "EmptySpectrogramError", "F0Track", "FeatureSequence",
    "FrameMismatchError", "Spectrogram", "Waveform", "assemble_features", "band_aperiodicity",
    "extract_f0", "load_features", "mcep_analyze", "mcep_from_magnitude", "mcep_to_envelope",
    "mcep_to_log_envelope", "mulaw_decode", "mulaw_encode", "read_wav", "resample",
    "save_features", "stft_magnitude", "write_wav",
]
