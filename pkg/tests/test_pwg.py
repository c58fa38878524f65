import numpy as np
import pytest

from cycnpf.autodiff import Tensor, backward, ops
from cycnpf.dsp import FeatureSequence
from cycnpf.pwg import (
    MAG_FLOOR,
    PwgConfig,
    PwgModel,
    PwgTrainConfig,
    lsgan_losses,
    multires_stft_loss,
    pwg_generate,
    pwg_synthesize,
    pwg_train,
    stft_loss_tensor,
)
from cycnpf.vocoder import SchemaMismatch

TINY = PwgConfig(gen_layers=4, gen_cycles=2, channels=6, disc_layers=3, disc_channels=4)
SMALL_RES = ((64, 16, 32), (128, 32, 64))


def feats(frames=3, seed=0, hop=120):
    rng = np.random.default_rng(seed)
    return FeatureSequence(rng.normal(size=(frames, 46)), rng.normal(size=frames) + 5, np.ones(frames),
                           rng.random((frames, 3)), hop_size=hop)


def test_dilation_schedules():
    cfg = PwgConfig()
    assert cfg.gen_dilations == [2**i for i in range(10)] * 2
    assert cfg.disc_dilations == [1, 1, 2, 3, 4, 5, 6]
    assert TINY.generator_receptive_field() == 13
    with pytest.raises(ValueError):
        PwgConfig(gen_layers=5, gen_cycles=2)


def test_generator_length_and_determinism():
    model = PwgModel(TINY, seed=0)
    f = feats(4)
    a = pwg_synthesize(model, f, seed=3)
    assert len(a) == 4 * 120
    assert np.array_equal(a.samples, pwg_synthesize(model, f, seed=3).samples)
    assert not np.array_equal(a.samples, pwg_synthesize(model, f, seed=4).samples)


def test_generate_rejects_misaligned_inputs():
    model = PwgModel(TINY)
    with pytest.raises(ValueError):
        pwg_generate(model, np.zeros(100), np.zeros((99, 50)))


def test_receptive_field_probe():
    model = PwgModel(TINY, seed=1, dtype=np.float64)
    rng = np.random.default_rng(0)
    noise = rng.normal(size=200)
    cond = rng.normal(size=(200, 50))
    base = model.generator(noise, cond).data[0]
    k = 100
    poked = noise.copy()
    poked[k] += 1.0
    diff = np.abs(model.generator(poked, cond).data[0] - base)
    half = (TINY.generator_receptive_field() - 1) // 2
    outside = np.ones(200, bool)
    outside[k - half : k + half + 1] = False
    assert np.all(diff[outside] == 0)
    assert diff[k - half] > 0 and diff[k + half] > 0


def test_split_generation_matches_away_from_the_seam():
    model = PwgModel(TINY, seed=2, dtype=np.float64)
    rng = np.random.default_rng(1)
    noise, cond = rng.normal(size=240), rng.normal(size=(240, 50))
    full = model.generator(noise, cond).data[0]
    half = (TINY.generator_receptive_field() - 1) // 2
    first = model.generator(noise[:120], cond[:120]).data[0]
    second = model.generator(noise[120:], cond[120:]).data[0]
    assert np.array_equal(first[: 120 - half], full[: 120 - half])
    assert np.array_equal(second[half:], full[120 + half :])


def test_spectral_convergence_of_scaled_copy():
    x = np.random.default_rng(0).normal(size=4000)
    sc, lm, _ = multires_stft_loss(2 * x, x)
    assert sc == pytest.approx(1.0, abs=1e-6)
    assert lm == pytest.approx(np.log(2), abs=1e-4)
    assert multires_stft_loss(x, x) == (0.0, 0.0, 0.0)


def test_spectral_convergence_against_silence_is_one():
    x = np.random.default_rng(1).normal(size=4000)
    sc, _, _ = multires_stft_loss(np.zeros_like(x), x)
    assert sc == pytest.approx(1.0, abs=1e-3)
    assert MAG_FLOOR**2 == pytest.approx(1e-7)


def test_stft_loss_length_mismatch():
    with pytest.raises(ValueError):
        multires_stft_loss(np.zeros(100), np.zeros(101))


def test_tensor_loss_matches_numpy_loss():
    rng = np.random.default_rng(2)
    g, n = rng.normal(size=3000), rng.normal(size=3000)
    sc, lm = stft_loss_tensor(Tensor(g[None]), n[None])
    ref = multires_stft_loss(g, n)
    assert float(sc.data) == pytest.approx(ref[0], rel=1e-9)
    assert float(lm.data) == pytest.approx(ref[1], rel=1e-9)


@pytest.mark.parametrize("c", [0.0, 0.3, 1.0, -2.0])
def test_lsgan_closed_forms(c):
    def disc(w):
        return ops.add(ops.scale(w, 0.0), c)

    real = Tensor(np.ones((2, 8)))
    fake = Tensor(np.zeros((2, 8)), requires_grad=True)
    d_loss, g_adv = lsgan_losses(disc, real, fake)
    assert float(d_loss.data) == pytest.approx((c - 1) ** 2 + c**2)
    assert float(g_adv.data) == pytest.approx((c - 1) ** 2)


def test_discriminator_loss_does_not_reach_generator():
    model = PwgModel(TINY, seed=3, dtype=np.float64)
    fake = Tensor(np.random.default_rng(0).normal(size=(1, 64)), requires_grad=True)
    real = np.random.default_rng(1).normal(size=(1, 64))
    d_loss, g_adv = lsgan_losses(model.discriminator, real, fake)
    grads = backward(d_loss, {"fake": fake})
    assert np.array_equal(grads["fake"], np.zeros((1, 64)))
    fake.grad = None
    assert np.abs(backward(g_adv, {"fake": fake})["fake"]).max() > 0


def _dataset(n=2, frames=4):
    t = np.arange(frames * 120) / 24000
    return [(feats(frames, seed=s), 0.3 * np.sin(2 * np.pi * (110 + 20 * s) * t)) for s in range(n)]


CFG = PwgTrainConfig(steps=4, batch_size=1, segment_frames=2, log_every=2)


def _train(lam, warmup, seed=0):
    model = PwgModel(PwgConfig(**{**TINY.__dict__, "stft_resolutions": SMALL_RES, "lambda_adv": lam}), seed=seed)
    cfg = PwgTrainConfig(**{**CFG.__dict__, "warmup_steps": warmup})
    return pwg_train(model, _dataset(), cfg, seed=0)


def test_warmup_keeps_discriminator_idle():
    fresh = PwgModel(TINY, seed=0)
    model = _train(4.0, warmup=4)
    for k in model.disc:
        assert np.array_equal(model.disc[k].data, fresh.disc[k].data)
    assert all("d_loss" not in h for h in model.history)


def test_zero_lambda_generator_matches_pure_stft_training():
    a = _train(0.0, warmup=0)
    b = _train(4.0, warmup=4)
    for k in a.gen:
        assert np.array_equal(a.gen[k].data, b.gen[k].data)
    assert "d_loss" in a.history[-1]
    fresh = PwgModel(TINY, seed=0)
    assert any(not np.array_equal(a.disc[k].data, fresh.disc[k].data) for k in a.disc)


def test_adversarial_term_changes_generator():
    a = _train(4.0, warmup=0)
    b = _train(4.0, warmup=4)
    assert any(not np.array_equal(a.gen[k].data, b.gen[k].data) for k in a.gen)


def test_checkpoint_roundtrip_with_and_without_discriminator(tmp_path):
    model = _train(4.0, warmup=2)
    model.save(tmp_path / "full")
    back = PwgModel.load(tmp_path / "full")
    for k in model.gen:
        assert back.gen[k].data.tobytes() == model.gen[k].data.tobytes()
    for k in model.disc:
        assert back.disc[k].data.tobytes() == model.disc[k].data.tobytes()
    assert back.step == 4 and back.history == model.history
    f = feats(2)
    assert np.array_equal(pwg_synthesize(back, f).samples, pwg_synthesize(model, f).samples)
    model.save(tmp_path / "gen", include_discriminator=False)
    with pytest.raises(KeyError):
        PwgModel.load(tmp_path / "gen")
    light = PwgModel.load(tmp_path / "gen", with_discriminator=False)
    assert light.disc is None
    with pytest.raises(RuntimeError):
        light.discriminator(np.zeros((1, 10)))


def test_schema_guard():
    with pytest.raises(SchemaMismatch):
        pwg_synthesize(PwgModel(TINY), feats(2, hop=100))
