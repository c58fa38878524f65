import numpy as np
import pytest

from cycnpf.autodiff import Tensor, ops
from cycnpf.dsp import FeatureSequence, mulaw_encode
from cycnpf.vocoder import SchemaMismatch, TrainingAborted, upsample_conditioning
from cycnpf.wavenet import (
    SILENCE_CODE,
    WaveNetConfig,
    WaveNetModel,
    WaveNetTrainConfig,
    receptive_field,
    wn_generate,
    wn_train,
)

TINY = WaveNetConfig(dilations=(1, 2, 4), residual_channels=8, skip_channels=8)


def feats(frames=3, seed=0, hop=120):
    rng = np.random.default_rng(seed)
    return FeatureSequence(rng.normal(size=(frames, 46)), rng.normal(size=frames) + 5, np.ones(frames),
                           rng.random((frames, 3)), hop_size=hop)


@pytest.mark.parametrize("cycles,expected", [
    ([[1, 2, 4, 8, 16, 32, 64, 128, 256, 512]] * 2, 2047),
    ([[1, 2, 4, 8, 16, 32, 64, 128]] * 2, 511),
    ([[1]], 2),
    ([[1, 2, 4]], 8),
])
def test_receptive_field(cycles, expected):
    assert receptive_field(WaveNetConfig.from_cycles(cycles, residual_channels=4, skip_channels=4)) == expected


def test_config_contract():
    with pytest.raises(ValueError):
        WaveNetConfig(kernel=3)
    with pytest.raises(ValueError):
        WaveNetConfig(aux_channels=10)


def test_causality_and_receptive_field_probe():
    model = WaveNetModel(TINY, seed=1)
    rf = model.receptive_field
    rng = np.random.default_rng(0)
    codes = rng.integers(0, 256, size=(1, 40))
    cond = rng.normal(size=(1, 40, 50))
    base = model.teacher_forward(codes, cond).data
    k = 12
    poked = codes.copy()
    poked[0, k] = (poked[0, k] + 97) % 256
    moved = model.teacher_forward(poked, cond).data
    diff = np.abs(moved - base).max(axis=-1)[0]
    assert np.all(diff[: k + 1] == 0)
    assert diff[k + 1] > 0
    assert np.all(diff[k + rf + 1 :] == 0)
    assert diff[k + rf] > 0


def test_silence_code_is_zero_amplitude_bin():
    assert SILENCE_CODE == int(mulaw_encode(0.0))


def test_log_likelihood_matches_cross_entropy():
    model = WaveNetModel(TINY, seed=2, dtype=np.float64)
    rng = np.random.default_rng(1)
    codes = rng.integers(0, 256, size=(2, 30))
    cond = rng.normal(size=(2, 30, 50))
    ce = float(ops.softmax_cross_entropy(model.teacher_forward(codes, cond), codes).data)
    assert model.sequence_log_likelihood(codes, cond) == pytest.approx(-ce * codes.size, rel=1e-12)


def test_closed_gate_passes_residual_through():
    model = WaveNetModel(TINY, seed=3, dtype=np.float64)
    r = TINY.residual_channels
    g = model.graph
    for name in ("l0.dil.w", "l0.cond.w"):
        g[name].data[..., :r] = 0.0
    g["l0.dil.b"].data[:r] = 0.0
    x = np.random.default_rng(2).normal(size=(1, 10, r))
    cond = np.random.default_rng(3).normal(size=(1, 10, 50))
    out, skip = model.residual_block(0, Tensor(x), Tensor(cond))
    assert np.allclose(out.data, x + g["l0.res.b"].data)
    assert np.allclose(skip.data, g["l0.skip.b"].data)


def test_generation_length_and_determinism():
    model = WaveNetModel(TINY, seed=4)
    f = feats(3)
    a = wn_generate(model, f, seed=5, sampling="categorical")
    b = wn_generate(model, f, seed=5, sampling="categorical")
    c = wn_generate(model, f, seed=6, sampling="categorical")
    assert len(a) == 3 * 120 == len(b)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_incremental_generation_matches_full_pass():
    model = WaveNetModel(TINY, seed=6)
    f = feats(2, seed=1)
    wave = wn_generate(model, f, sampling="argmax")
    codes = mulaw_encode(wave.samples)[None]
    cond = model.normalizer(upsample_conditioning(f))[None]
    logits = model.teacher_forward(codes, cond).data
    assert np.array_equal(np.argmax(logits, axis=-1), codes)


def test_batched_generation_matches_single():
    model = WaveNetModel(TINY, seed=7)
    fs = [feats(2, seed=2), feats(3, seed=3)]
    batch = wn_generate(model, fs)
    for f, w in zip(fs, batch):
        assert len(w) == f.num_frames * 120
        assert np.array_equal(w.samples, wn_generate(model, f).samples)


def test_schema_guard():
    model = WaveNetModel(TINY)
    with pytest.raises(SchemaMismatch):
        wn_generate(model, feats(2, hop=240))


def test_unknown_sampling_mode():
    with pytest.raises(ValueError):
        wn_generate(WaveNetModel(TINY), feats(1), sampling="beam")


def _dataset(n=2, frames=6):
    rng = np.random.default_rng(9)
    t = np.arange(frames * 120) / 24000
    return [(feats(frames, seed=s), np.sin(2 * np.pi * 150 * t) * 0.4 + rng.normal(scale=0.01, size=t.size))
            for s in range(n)]


def test_training_lowers_loss_and_resumes_step(tmp_path):
    model = WaveNetModel(TINY, seed=0)
    cfg = WaveNetTrainConfig(steps=30, batch_size=2, segment_frames=2, lr=3e-3, log_every=10)
    wn_train(model, _dataset(), cfg, seed=0)
    assert model.step == 30
    losses = [h["loss"] for h in model.history]
    assert losses[0] == pytest.approx(np.log(256), abs=0.3)
    assert losses[-1] < losses[0]
    model.save(tmp_path / "wn")
    back = WaveNetModel.load(tmp_path / "wn")
    assert back.step == 30 and back.history == model.history
    for k in model.graph:
        assert back.graph[k].data.tobytes() == model.graph[k].data.tobytes()
    assert np.array_equal(back.normalizer.mean, model.normalizer.mean)
    f = feats(1)
    assert np.array_equal(wn_generate(back, f).samples, wn_generate(model, f).samples)
    wn_train(back, _dataset(), WaveNetTrainConfig(steps=5, batch_size=1, segment_frames=2), seed=0)
    assert back.step == 35


def test_training_is_deterministic():
    cfg = WaveNetTrainConfig(steps=3, batch_size=2, segment_frames=2)
    a = wn_train(WaveNetModel(TINY, seed=0), _dataset(), cfg, seed=1)
    b = wn_train(WaveNetModel(TINY, seed=0), _dataset(), cfg, seed=1)
    for k in a.graph:
        assert np.array_equal(a.graph[k].data, b.graph[k].data)


def test_nonfinite_loss_aborts():
    model = WaveNetModel(TINY)
    model.graph["out2.b"].data[:] = np.nan
    with pytest.raises(TrainingAborted):
        wn_train(model, _dataset(), WaveNetTrainConfig(steps=1, batch_size=1, segment_frames=2))
