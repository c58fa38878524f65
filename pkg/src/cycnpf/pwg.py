"""Parallel (non-autoregressive) GAN vocoder.

The generator maps Gaussian noise to a waveform in one pass through a stack of
non-causal gated dilated convolutions, conditioned on the upsampled feature
view. A fully convolutional discriminator scores every sample. Training mixes
a least-squares adversarial loss with a multi-resolution STFT loss; the
discriminator is switched on only after a warm-up period.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Adam, Graph, Tensor, load_checkpoint, ops, save_checkpoint
from .autodiff.init import scaled_uniform
from .dsp.audio import Waveform
from .dsp.features import COND_DIM, FeatureSequence
from .dsp.stft import stft_complex
from .vocoder import (
    CondNormalizer,
    SchemaMismatch,
    SegmentSampler,
    TrainingAborted,
    features_schema_hash,
    schema_hash,
)

logger = logging.getLogger(__name__)

STFT_RESOLUTIONS = ((512, 50, 240), (1024, 120, 600), (2048, 240, 1200))
MAG_FLOOR = float(np.sqrt(1e-7))  # power floor 1e-7
RES_SCALE = float(np.sqrt(0.5))


@dataclass(frozen=True)
class PwgConfig:
    gen_layers: int = 20
    gen_cycles: int = 2
    channels: int = 32
    disc_layers: int = 8
    disc_channels: int = 32
    leaky_slope: float = 0.2
    stft_resolutions: tuple = STFT_RESOLUTIONS
    lambda_adv: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "stft_resolutions", tuple(tuple(int(v) for v in r) for r in self.stft_resolutions))
        if self.gen_layers % self.gen_cycles:
            raise ValueError("gen_layers must be a multiple of gen_cycles")
        if self.disc_layers < 2:
            raise ValueError("discriminator needs at least two layers")

    @property
    def gen_dilations(self):
        per = self.gen_layers // self.gen_cycles
        return [2 ** (i % per) for i in range(self.gen_layers)]

    @property
    def disc_dilations(self):
        # 1, 1, 2, 3, ...: grows once, no cycle repeat
        return [max(1, i) for i in range(self.disc_layers - 1)]

    def generator_receptive_field(self) -> int:
        """Total extent (both sides) of kernel-3 non-causal layers."""
        return 1 + sum(2 * d for d in self.gen_dilations)


@dataclass
class PwgTrainConfig:
    steps: int = 1000
    batch_size: int = 2
    segment_frames: int = 30
    gen_lr: float = 1e-3
    disc_lr: float = 1e-4
    warmup_fraction: float = 0.1
    warmup_steps: int | None = None
    grad_clip: float = 10.0
    log_every: int = 25

    def warmup(self) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return int(round(self.warmup_fraction * self.steps))


# losses ---------------------------------------------------------------------

def _stft_mag_np(x, fft, hop, win):
    spec = stft_complex(x, fft, hop, win)
    return np.sqrt(spec.real**2 + spec.imag**2 + MAG_FLOOR**2)


def multires_stft_loss(generated, natural, resolutions=STFT_RESOLUTIONS):
    """``(spectral_convergence, log_mag_l1, total)`` averaged over resolutions.

    Spectral convergence uses the natural signal as reference:
    ``||N| - |G|| / ||N||`` (Frobenius). Magnitudes carry a small smooth floor
    so the log term is finite on silence.
    """
    g = np.asarray(getattr(generated, "samples", generated), dtype=np.float64)
    n = np.asarray(getattr(natural, "samples", natural), dtype=np.float64)
    if g.shape != n.shape:
        raise ValueError(f"length mismatch: {g.shape} vs {n.shape}")
    scs, lms = [], []
    for fft, hop, win in resolutions:
        mg, mn = _stft_mag_np(g, fft, hop, win), _stft_mag_np(n, fft, hop, win)
        scs.append(np.linalg.norm(mn - mg) / np.linalg.norm(mn))
        lms.append(np.mean(np.abs(np.log(mn) - np.log(mg))))
    sc, lm = float(np.mean(scs)), float(np.mean(lms))
    return sc, lm, sc + lm


def stft_loss_tensor(generated: Tensor, natural: np.ndarray, resolutions=STFT_RESOLUTIONS):
    """Differentiable twin of :func:`multires_stft_loss` on ``[B, T]`` batches."""
    natural = np.asarray(natural, dtype=generated.dtype)
    bsz = natural.shape[0]
    sc_total, lm_total = None, None
    for fft, hop, win in resolutions:
        mg = ops.stft_mag(generated, fft, hop, win, MAG_FLOOR)
        mn = ops.stft_mag(natural, fft, hop, win, MAG_FLOOR).data
        diff = ops.add(mg, Tensor(-mn))
        num = ops.sqrt(ops.add(ops.sum(ops.reshape(ops.square(diff), (bsz, -1)), axis=1), 1e-12))
        den = np.sqrt(np.sum(np.square(mn).reshape(bsz, -1), axis=1))
        sc = ops.mean(ops.mul(num, Tensor(1.0 / den)))
        lm = ops.mean(ops.absolute(ops.add(ops.log(mg), Tensor(-np.log(mn)))))
        sc_total = sc if sc_total is None else ops.add(sc_total, sc)
        lm_total = lm if lm_total is None else ops.add(lm_total, lm)
    k = 1.0 / len(resolutions)
    return ops.scale(sc_total, k), ops.scale(lm_total, k)


def lsgan_losses(disc, real, fake):
    """``(d_loss, g_adv_loss)`` for a discriminator callable on ``[B, T]``.

    ``d_loss`` sees ``fake`` through a detach, so it never reaches the
    generator; ``g_adv_loss`` is meant for the generator step only.
    """
    real = ops.detach(real)
    d_real = disc(real)
    d_fake_detached = disc(ops.detach(fake))
    d_loss = ops.add(ops.mean(ops.square(ops.add(d_real, -1.0))), ops.mean(ops.square(d_fake_detached)))
    g_adv = ops.mean(ops.square(ops.add(disc(fake), -1.0)))
    return d_loss, g_adv


# model ----------------------------------------------------------------------

class PwgModel:
    kind = "pwg"

    def __init__(self, config: PwgConfig = PwgConfig(), seed: int = 0, dtype=np.float32,
                 hop_size: int = 120, sample_rate: int = 24000, with_discriminator: bool = True):
        self.config = config
        self.seed = seed
        self.hop_size = hop_size
        self.sample_rate = sample_rate
        self.schema = schema_hash(hop_size, sample_rate)
        self.normalizer = CondNormalizer()
        self.step = 0
        self.history: list = []
        rng = np.random.default_rng(seed)
        c = config.channels
        self.gen = g = Graph(dtype)
        g.param("in.w", scaled_uniform(rng, (1, 1, c), 1))
        g.param("in.b", np.zeros(c))
        for i, _ in enumerate(config.gen_dilations):
            g.param(f"l{i}.dil.w", scaled_uniform(rng, (3, c, 2 * c), 3 * c))
            g.param(f"l{i}.dil.b", np.zeros(2 * c))
            g.param(f"l{i}.cond.w", scaled_uniform(rng, (COND_DIM, 2 * c), COND_DIM))
            g.param(f"l{i}.res.w", scaled_uniform(rng, (c, c), c))
            g.param(f"l{i}.res.b", np.zeros(c))
            g.param(f"l{i}.skip.w", scaled_uniform(rng, (c, c), c))
            g.param(f"l{i}.skip.b", np.zeros(c))
        g.param("out1.w", scaled_uniform(rng, (c, c), c))
        g.param("out1.b", np.zeros(c))
        g.param("out2.w", scaled_uniform(rng, (c, 1), c, gain=0.1))
        g.param("out2.b", np.zeros(1))
        self.disc = None
        # the discriminator draws from its own stream so generator init is unaffected by it
        if with_discriminator:
            self._init_discriminator(np.random.default_rng([seed, 1]), dtype)

    def _init_discriminator(self, rng, dtype):
        cfg = self.config
        d = self.disc = Graph(dtype)
        cin = 1
        for i, _ in enumerate(cfg.disc_dilations):
            d.param(f"d{i}.w", scaled_uniform(rng, (3, cin, cfg.disc_channels), 3 * cin))
            d.param(f"d{i}.b", np.zeros(cfg.disc_channels))
            cin = cfg.disc_channels
        d.param("dout.w", scaled_uniform(rng, (3, cin, 1), 3 * cin))
        d.param("dout.b", np.zeros(1))

    def check_schema(self, features: FeatureSequence):
        got = features_schema_hash(features)
        if got != self.schema:
            raise SchemaMismatch(f"feature schema {got} does not match model schema {self.schema}")

    def prepare(self, features: FeatureSequence) -> np.ndarray:
        self.check_schema(features)
        return np.repeat(self.normalizer(features.conditioning()), self.hop_size, axis=0)

    # networks ----------------------------------------------------------
    def generator(self, noise, cond) -> Tensor:
        """``noise[B, T]`` and ``cond[B, T, 50]`` to waveform ``[B, T]``."""
        g = self.gen
        c = self.config.channels
        noise = np.asarray(noise, dtype=g.dtype)
        cond = np.asarray(cond, dtype=g.dtype)
        if noise.ndim == 1:
            noise, cond = noise[None], cond[None]
        if cond.shape[:2] != noise.shape:
            raise ValueError(f"noise {noise.shape} and conditioning {cond.shape[:2]} lengths differ")
        x = ops.conv1d(noise[..., None], g["in.w"], g["in.b"])
        cnd = Tensor(cond)
        skips = None
        for i, dil in enumerate(self.config.gen_dilations):
            z = ops.add(ops.conv1d(x, g[f"l{i}.dil.w"], g[f"l{i}.dil.b"], dilation=dil),
                        ops.matmul(cnd, g[f"l{i}.cond.w"]))
            gate = ops.mul(ops.tanh(ops.getitem(z, (Ellipsis, slice(0, c)))),
                           ops.sigmoid(ops.getitem(z, (Ellipsis, slice(c, 2 * c)))))
            s = ops.linear(gate, g[f"l{i}.skip.w"], g[f"l{i}.skip.b"])
            skips = s if skips is None else ops.add(skips, s)
            x = ops.scale(ops.add(x, ops.linear(gate, g[f"l{i}.res.w"], g[f"l{i}.res.b"])), RES_SCALE)
        h = ops.relu(ops.linear(ops.relu(skips), g["out1.w"], g["out1.b"]))
        y = ops.linear(h, g["out2.w"], g["out2.b"])
        return ops.reshape(y, noise.shape)

    def discriminator(self, wave) -> Tensor:
        """Per-sample real/fake score ``[B, T]``."""
        if self.disc is None:
            raise RuntimeError("model was loaded without a discriminator")
        d = self.disc
        wave = ops.detach(wave) if not isinstance(wave, Tensor) else wave
        shape = wave.shape
        x = ops.reshape(wave, shape + (1,))
        for i, dil in enumerate(self.config.disc_dilations):
            x = ops.leaky_relu(ops.conv1d(x, d[f"d{i}.w"], d[f"d{i}.b"], dilation=dil), self.config.leaky_slope)
        return ops.reshape(ops.conv1d(x, d["dout.w"], d["dout.b"]), shape)

    # persistence -------------------------------------------------------
    def hyper(self) -> dict:
        cfg = asdict(self.config)
        cfg["stft_resolutions"] = [list(r) for r in cfg["stft_resolutions"]]
        return {"config": cfg, "seed": self.seed, "hop_size": self.hop_size, "sample_rate": self.sample_rate}

    def save(self, stem, include_discriminator: bool = True, extra: dict | None = None):
        params = OrderedDict(("gen." + k, v) for k, v in self.gen.state().items())
        if include_discriminator and self.disc is not None:
            params.update(("disc." + k, v) for k, v in self.disc.state().items())
        params["norm.mean"] = self.normalizer.mean
        params["norm.std"] = self.normalizer.std
        info = {"step": self.step, "schema": self.schema, "history": self.history,
                "has_discriminator": any(k.startswith("disc.") for k in params)}
        info.update(extra or {})
        return save_checkpoint(stem, self.kind, params, self.hyper(), info)

    @classmethod
    def load(cls, stem, with_discriminator: bool = True) -> "PwgModel":
        manifest, params = load_checkpoint(stem, cls.kind)
        hp = manifest["hyperparameters"]
        extra = manifest["extra"]
        if with_discriminator and not extra.get("has_discriminator"):
            raise KeyError("checkpoint has no discriminator parameters")
        cfg = hp["config"]
        model = cls(PwgConfig(**cfg), hp["seed"], hop_size=hp["hop_size"], sample_rate=hp["sample_rate"],
                    with_discriminator=with_discriminator)
        if extra["schema"] != model.schema:
            raise SchemaMismatch("checkpoint schema hash does not match its own hyperparameters")
        model.normalizer = CondNormalizer(params.pop("norm.mean"), params.pop("norm.std"))
        model.gen.load_state(OrderedDict((k[4:], v) for k, v in params.items() if k.startswith("gen.")))
        if with_discriminator:
            model.disc.load_state(OrderedDict((k[5:], v) for k, v in params.items() if k.startswith("disc.")))
        model.step = extra["step"]
        model.history = extra.get("history", [])
        return model


def pwg_generate(model: PwgModel, noise, cond) -> Waveform:
    """One parallel generator pass; ``noise[T]`` and ``cond[T, 50]`` must agree in length."""
    noise = np.asarray(noise)
    cond = np.asarray(cond)
    if noise.ndim != 1 or cond.shape != (noise.size, COND_DIM):
        raise ValueError(f"noise {noise.shape} and conditioning {cond.shape} do not line up")
    y = model.generator(noise, cond).data[0].astype(np.float64)
    return Waveform.clipped(y, model.sample_rate)


def pwg_synthesize(model: PwgModel, features: FeatureSequence, seed: int = 0) -> Waveform:
    """Seeded noise draw plus :func:`pwg_generate` for one utterance."""
    cond = model.prepare(features)
    noise = np.random.default_rng(seed).standard_normal(cond.shape[0])
    return pwg_generate(model, noise, cond)


def _clip(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm and total > max_norm:
        for g in grads.values():
            g *= max_norm / total
    return total


def pwg_train(model: PwgModel, dataset, config: PwgTrainConfig = PwgTrainConfig(), seed: int = 0,
              fit_normalizer: bool = True) -> PwgModel:
    """Generator and discriminator updates with two Adam optimisers.

    Before the warm-up step count is reached the generator sees only the
    STFT loss and the discriminator is idle. Afterwards each step updates the
    generator on ``stft + lambda_adv * g_adv`` and then the discriminator on
    ``d_loss``. ``lambda_adv == 0`` removes the adversarial term entirely.
    """
    dataset = list(dataset)
    for feats, _ in dataset:
        model.check_schema(feats)
    if fit_normalizer and model.step == 0:
        model.normalizer = CondNormalizer.fit([f for f, _ in dataset])
    rng = np.random.default_rng([seed, model.step])
    sampler = SegmentSampler(dataset, config.segment_frames, rng, model.normalizer)
    g_opt = Adam(model.gen.params, lr=config.gen_lr)
    d_opt = Adam(model.disc.params, lr=config.disc_lr) if model.disc is not None else None
    lam = model.config.lambda_adv
    warmup = config.warmup()
    res = model.config.stft_resolutions
    window = []
    for _ in range(config.steps):
        cond, wave = sampler.batch(config.batch_size)
        noise = rng.standard_normal(wave.shape)
        fake = model.generator(noise, cond)
        sc, lm = stft_loss_tensor(fake, wave, res)
        stft = ops.add(sc, lm)
        adversarial = model.step >= warmup and d_opt is not None
        g_loss = stft
        if adversarial and lam != 0.0:
            g_adv = ops.mean(ops.square(ops.add(model.discriminator(fake), -1.0)))
            g_loss = ops.add(stft, ops.scale(g_adv, lam))
        entry = {"stft": float(stft.data), "g_loss": float(g_loss.data)}
        fake_data = fake.data.copy()
        if not np.isfinite(entry["g_loss"]):
            raise TrainingAborted(f"non-finite generator loss at step {model.step + 1}: {entry}")
        grads = model.gen.backward(g_loss)
        _clip(grads, config.grad_clip)
        g_opt.step(grads)
        if adversarial:
            d_loss = ops.add(ops.mean(ops.square(ops.add(model.discriminator(wave), -1.0))),
                             ops.mean(ops.square(model.discriminator(Tensor(fake_data)))))
            entry["d_loss"] = float(d_loss.data)
            if not np.isfinite(entry["d_loss"]):
                raise TrainingAborted(f"non-finite discriminator loss at step {model.step + 1}: {entry}")
            d_grads = model.disc.backward(d_loss)
            _clip(d_grads, config.grad_clip)
            d_opt.step(d_grads)
        model.step += 1
        window.append(entry)
        if len(window) == config.log_every:
            model.history.append(_summarise(window, model.step))
            logger.info("pwg step %d: %s", model.step, model.history[-1])
            window = []
    if window:
        model.history.append(_summarise(window, model.step))
    return model


def _summarise(window, step):
    keys = sorted({k for e in window for k in e})
    out = {"step": step}
    for k in keys:
        vals = [e[k] for e in window if k in e]
        out[k] = float(np.mean(vals))
    return out
