"""
Analysing a waveform into vocoder features
==========================================

A pseudo-speech utterance from the built-in corpus is turned into the
feature streams every other part of the package consumes.
"""

import numpy as np

from cycnpf.corpus import synth_corpus
from cycnpf.dsp import assemble_features, mcep_to_envelope, mulaw_decode, mulaw_encode

# one utterance of about 0.8 s at 24 kHz
utt, wave = synth_corpus(1, 0.8, seed=0)[0]
print(utt, len(wave.samples), "samples")

# 46 warped-cepstrum coefficients, log F0, a voicing flag and 3 coded
# aperiodicity bands, one row every 120 samples
feats = assemble_features(wave)
print("frames:", feats.num_frames)
print("mcep", feats.mcep.shape, "coded ap", feats.coded_ap.shape)
print("voiced fraction: %.2f" % feats.uv.mean())
print("median F0 of voiced frames: %.1f Hz" % np.exp(np.median(feats.log_f0[feats.uv > 0])))

# the network input drops c0 and stacks the rest: 45 + 1 + 1 + 3 columns
print("conditioning", feats.conditioning().shape)

# the cepstrum maps back to a smooth 513-bin envelope
env = mcep_to_envelope(feats.mcep, feats.alpha, 1024)
db = 20 * np.log10(env.frames[40])
print("envelope", env.frames.shape, "frame 40 spans %.1f dB" % (db.max() - db.min()))

# WaveNet sees the waveform as 256 mu-law codes
codes = mulaw_encode(wave.samples)
err = np.abs(mulaw_decode(codes) - wave.samples).max()
print("mu-law codes in [%d, %d], worst reconstruction error %.4f" % (codes.min(), codes.max(), err))
