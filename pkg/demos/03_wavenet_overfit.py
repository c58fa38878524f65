"""
Overfitting a small WaveNet on one periodic clip
================================================

A strictly periodic 100 Hz clip is the easiest possible target, so a small
WaveNet learns to predict its next mu-law code almost perfectly within a few
hundred steps. Generation then runs sample by sample with cached layer
inputs.
"""

import numpy as np

from cycnpf.dsp import Waveform, assemble_features, mulaw_encode
from cycnpf.wavenet import WaveNetConfig, WaveNetModel, WaveNetTrainConfig, wn_generate, wn_train

sr = 24000
t = np.arange(sr) / sr
x = sum((0.5 / k) * np.sin(2 * np.pi * 100 * k * t + 0.3 * k) for k in range(1, 25))
wave = Waveform(0.5 * x / np.abs(x).max(), sr)
feats = assemble_features(wave)

cfg = WaveNetConfig.from_cycles([[1, 2, 4, 8, 16, 32, 64, 128]] * 2, residual_channels=32, skip_channels=32)
model = WaveNetModel(cfg)
print("receptive field:", model.receptive_field, "samples")

codes = mulaw_encode(wave.samples[:6000])
for round_ in range(4):
    wn_train(model, [(feats, wave)], WaveNetTrainConfig(steps=50, batch_size=2, segment_frames=10, lr=3e-3),
             seed=round_)
    cond = np.repeat(model.normalizer(feats.conditioning()), 120, axis=0)[:6000]
    acc = (model.teacher_forward(codes, cond).data[0].argmax(-1) == codes).mean()
    print("step %d  loss %.3f  teacher-forced accuracy %.3f" % (model.step, model.history[-1]["loss"], acc))

# ten frames generate exactly 10 * 120 samples
short = feats.take(np.arange(10))
out = wn_generate(model, short)
print("generated", len(out.samples), "samples, rms %.3f" % np.sqrt(np.mean(out.samples ** 2)))
