"""Autoregressive WaveNet vocoder over 8-bit mu-law codes.

The model factorises ``P(x) = prod_t P(x_t | x_{t-r} .. x_{t-1}, h)`` with a
stack of gated, dilated, causal 2-tap convolutions. Input codes are embedded
(one-hot times matrix), shifted right by one sample so that position ``t``
only sees earlier samples. Conditioning ``h`` is the 50-dim feature view held
constant across each frame's hop.

Residual block::

    z    = dilated_causal_conv(x) + h @ W_cond
    gate = tanh(z[:R]) * sigmoid(z[R:])
    skip = gate @ W_skip + b_skip
    out  = x + gate @ W_res + b_res

Output head: ``relu(sum skips) -> 1x1 -> relu -> 1x1 -> 256 logits``.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Adam, Graph, Tensor, load_checkpoint, ops, save_checkpoint
from .autodiff.init import scaled_uniform
from .autodiff.ops import log_softmax_np
from .dsp.audio import Waveform
from .dsp.features import COND_DIM, FeatureSequence
from .dsp.mulaw import CLASSES, mulaw_decode, mulaw_encode
from .vocoder import (
    CondNormalizer,
    SchemaMismatch,
    SegmentSampler,
    TrainingAborted,
    features_schema_hash,
    schema_hash,
)

logger = logging.getLogger(__name__)

SILENCE_CODE = int(mulaw_encode(0.0))


def _default_dilations():
    return [2**i for i in range(10)] * 2


@dataclass(frozen=True)
class WaveNetConfig:
    dilations: tuple = tuple(_default_dilations())
    residual_channels: int = 64
    skip_channels: int = 64
    aux_channels: int = COND_DIM
    kernel: int = 2
    quantization: int = CLASSES

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.kernel != 2:
            raise ValueError("causal kernel size is 2")
        if self.aux_channels != COND_DIM:
            raise ValueError(f"aux_channels must equal the conditioning width {COND_DIM}")
        if self.quantization != CLASSES:
            raise ValueError("output layer has 256 classes")

    @classmethod
    def from_cycles(cls, cycles, **kw) -> "WaveNetConfig":
        """``cycles`` is a list of dilation lists, e.g. ``[[1, 2, 4]] * 2``."""
        return cls(dilations=tuple(d for cyc in cycles for d in cyc), **kw)


def receptive_field(config: WaveNetConfig) -> int:
    return 1 + sum((config.kernel - 1) * d for d in config.dilations)


@dataclass
class WaveNetTrainConfig:
    steps: int = 2000
    batch_size: int = 4
    segment_frames: int = 30
    lr: float = 1e-3
    grad_clip: float = 10.0
    log_every: int = 50


class WaveNetModel:
    kind = "wavenet"

    def __init__(self, config: WaveNetConfig = WaveNetConfig(), seed: int = 0, dtype=np.float32,
                 hop_size: int = 120, sample_rate: int = 24000):
        self.config = config
        self.seed = seed
        self.hop_size = hop_size
        self.sample_rate = sample_rate
        self.schema = schema_hash(hop_size, sample_rate)
        self.graph = g = Graph(dtype)
        self.normalizer = CondNormalizer()
        self.step = 0
        self.history: list = []
        rng = np.random.default_rng(seed)
        r, s, q, a = config.residual_channels, config.skip_channels, config.quantization, config.aux_channels
        g.param("embed", scaled_uniform(rng, (q, r), 1, gain=1.0))
        for i, _ in enumerate(config.dilations):
            g.param(f"l{i}.dil.w", scaled_uniform(rng, (2, r, 2 * r), 2 * r))
            g.param(f"l{i}.dil.b", np.zeros(2 * r))
            g.param(f"l{i}.cond.w", scaled_uniform(rng, (a, 2 * r), a))
            g.param(f"l{i}.res.w", scaled_uniform(rng, (r, r), r))
            g.param(f"l{i}.res.b", np.zeros(r))
            g.param(f"l{i}.skip.w", scaled_uniform(rng, (r, s), r))
            g.param(f"l{i}.skip.b", np.zeros(s))
        g.param("out1.w", scaled_uniform(rng, (s, s), s))
        g.param("out1.b", np.zeros(s))
        # small output weights start the model near a uniform distribution
        g.param("out2.w", scaled_uniform(rng, (s, q), s, gain=0.1))
        g.param("out2.b", np.zeros(q))

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.config)

    def check_schema(self, features: FeatureSequence):
        got = features_schema_hash(features)
        if got != self.schema:
            raise SchemaMismatch(f"feature schema {got} does not match model schema {self.schema}")

    # network -----------------------------------------------------------
    def residual_block(self, i: int, x, cond):
        g = self.graph
        r = self.config.residual_channels
        z = ops.add(
            ops.conv1d(x, g[f"l{i}.dil.w"], g[f"l{i}.dil.b"], dilation=self.config.dilations[i], causal=True),
            ops.matmul(cond, g[f"l{i}.cond.w"]),
        )
        gate = ops.mul(ops.tanh(ops.getitem(z, (Ellipsis, slice(0, r)))),
                       ops.sigmoid(ops.getitem(z, (Ellipsis, slice(r, 2 * r)))))
        skip = ops.linear(gate, g[f"l{i}.skip.w"], g[f"l{i}.skip.b"])
        out = ops.add(x, ops.linear(gate, g[f"l{i}.res.w"], g[f"l{i}.res.b"]))
        return out, skip

    def teacher_forward(self, codes, cond) -> Tensor:
        """Logits ``[B, T, 256]`` for every position given the true previous codes.

        ``codes[B, T]`` are the targets; ``cond[B, T, 50]`` is the normalised,
        sample-rate conditioning. Position ``t`` depends on ``codes[t-r .. t-1]``.
        """
        codes = np.atleast_2d(np.asarray(codes))
        cond = np.asarray(cond, dtype=self.graph.dtype)
        if cond.ndim == 2:
            cond = cond[None]
        if cond.shape[:2] != codes.shape:
            raise ValueError(f"conditioning rows {cond.shape[:2]} do not match codes {codes.shape}")
        inputs = np.concatenate([np.full((codes.shape[0], 1), SILENCE_CODE), codes[:, :-1]], axis=1)
        x = ops.embedding(inputs, self.graph["embed"])
        c = Tensor(cond)
        skips = None
        for i in range(len(self.config.dilations)):
            x, s = self.residual_block(i, x, c)
            skips = s if skips is None else ops.add(skips, s)
        g = self.graph
        h = ops.relu(ops.linear(ops.relu(skips), g["out1.w"], g["out1.b"]))
        return ops.linear(h, g["out2.w"], g["out2.b"])

    def sequence_log_likelihood(self, codes, cond) -> float:
        logits = self.teacher_forward(codes, cond).data.astype(np.float64)
        logp = log_softmax_np(logits)
        codes = np.atleast_2d(codes)
        b, t = np.indices(codes.shape)
        return float(logp[b, t, codes].sum())

    def prepare(self, features: FeatureSequence) -> np.ndarray:
        """Normalised per-sample conditioning for one utterance."""
        self.check_schema(features)
        return np.repeat(self.normalizer(features.conditioning()), self.hop_size, axis=0)

    # persistence -------------------------------------------------------
    def hyper(self) -> dict:
        cfg = asdict(self.config)
        cfg["dilations"] = list(cfg["dilations"])
        return {"config": cfg, "seed": self.seed, "hop_size": self.hop_size, "sample_rate": self.sample_rate}

    def save(self, stem, extra: dict | None = None):
        params = OrderedDict(self.graph.state())
        params["norm.mean"] = self.normalizer.mean
        params["norm.std"] = self.normalizer.std
        info = {"step": self.step, "schema": self.schema, "history": self.history}
        info.update(extra or {})
        return save_checkpoint(stem, self.kind, params, self.hyper(), info)

    @classmethod
    def load(cls, stem) -> "WaveNetModel":
        manifest, params = load_checkpoint(stem, cls.kind)
        hp = manifest["hyperparameters"]
        model = cls(WaveNetConfig(**hp["config"]), hp["seed"], hop_size=hp["hop_size"],
                    sample_rate=hp["sample_rate"])
        if manifest["extra"]["schema"] != model.schema:
            raise SchemaMismatch("checkpoint schema hash does not match its own hyperparameters")
        model.normalizer = CondNormalizer(params.pop("norm.mean"), params.pop("norm.std"))
        model.graph.load_state(params)
        model.step = manifest["extra"]["step"]
        model.history = manifest["extra"].get("history", [])
        return model


def _clip(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm and total > max_norm:
        for g in grads.values():
            g *= max_norm / total
    return total


def wn_train(model: WaveNetModel, dataset, config: WaveNetTrainConfig = WaveNetTrainConfig(), seed: int = 0,
             fit_normalizer: bool = True) -> WaveNetModel:
    """Teacher-forced cross-entropy training on (FeatureSequence, Waveform) pairs.

    Continues from ``model.step`` so a pretrained model can be adapted;
    ``fit_normalizer=False`` keeps the pretrained conditioning statistics.
    """
    dataset = list(dataset)
    for feats, _ in dataset:
        model.check_schema(feats)
    if fit_normalizer and model.step == 0:
        model.normalizer = CondNormalizer.fit([f for f, _ in dataset])
    rng = np.random.default_rng([seed, model.step])
    sampler = SegmentSampler(dataset, config.segment_frames, rng, model.normalizer)
    opt = Adam(model.graph.params, lr=config.lr)
    running = []
    for _ in range(config.steps):
        cond, wave = sampler.batch(config.batch_size)
        codes = mulaw_encode(wave)
        loss = ops.softmax_cross_entropy(model.teacher_forward(codes, cond), codes)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingAborted(f"non-finite WaveNet loss {value} at step {model.step + 1}")
        grads = model.graph.backward(loss)
        _clip(grads, config.grad_clip)
        opt.step(grads)
        model.step += 1
        running.append(value)
        if len(running) == config.log_every:
            model.history.append({"step": model.step, "loss": float(np.mean(running))})
            logger.info("wavenet step %d: loss %.4f", model.step, model.history[-1]["loss"])
            running = []
    if running:
        model.history.append({"step": model.step, "loss": float(np.mean(running))})
    return model


def _log_softmax_rows(logits):
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def wn_generate(model: WaveNetModel, features, seed: int = 0, sampling: str = "argmax",
                temperature: float = 1.0):
    """Sample-by-sample generation; accepts one FeatureSequence or a list (batched).

    Each layer keeps a ring buffer of its last ``dilation`` inputs so every
    step costs O(layers). Returns a Waveform (or a list of them) of exactly
    ``num_frames * hop`` samples.
    """
    single = isinstance(features, FeatureSequence)
    feats = [features] if single else list(features)
    for f in feats:
        model.check_schema(f)
    if sampling not in ("argmax", "categorical"):
        raise ValueError(f"unknown sampling mode {sampling!r}")
    hop = model.hop_size
    n_frames = max(f.num_frames for f in feats)
    bsz = len(feats)
    dt = model.graph.dtype
    cond = np.zeros((bsz, n_frames, COND_DIM))
    for b, f in enumerate(feats):
        cond[b, : f.num_frames] = model.normalizer(f.conditioning())
        cond[b, f.num_frames :] = cond[b, f.num_frames - 1]
    cond = cond.astype(dt)
    p = {k: v.data for k, v in model.graph.params.items()}
    r = model.config.residual_channels
    layers = []
    for i, d in enumerate(model.config.dilations):
        w = p[f"l{i}.dil.w"]
        layers.append((
            d,
            np.concatenate([w[0], w[1]], axis=0),  # [x_{t-d}; x_t] -> 2R
            cond @ p[f"l{i}.cond.w"] + p[f"l{i}.dil.b"],  # [B, frames, 2R]
            np.concatenate([p[f"l{i}.res.w"], p[f"l{i}.skip.w"]], axis=1),
            np.concatenate([p[f"l{i}.res.b"], p[f"l{i}.skip.b"]]),
            np.zeros((d, bsz, r), dtype=dt),
        ))
    embed = p["embed"]
    rng = np.random.default_rng(seed)
    total = n_frames * hop
    codes = np.empty((bsz, total), dtype=np.int64)
    prev = np.full(bsz, SILENCE_CODE)
    for t in range(total):
        frame = t // hop
        x = embed[prev]
        skips = 0.0
        for d, w_dil, cproj, w_rs, b_rs, buf in layers:
            slot = t % d
            z = np.concatenate([buf[slot], x], axis=1) @ w_dil + cproj[:, frame]
            buf[slot] = x
            gate = np.tanh(z[:, :r]) * (0.5 * np.tanh(0.5 * z[:, r:]) + 0.5)
            rs = gate @ w_rs + b_rs
            x = x + rs[:, :r]
            skips = skips + rs[:, r:]
        h = np.maximum(np.maximum(skips, 0) @ p["out1.w"] + p["out1.b"], 0)
        logits = h @ p["out2.w"] + p["out2.b"]
        if sampling == "argmax":
            prev = np.argmax(logits, axis=1)
        else:
            logp = _log_softmax_rows(logits.astype(np.float64) / temperature)
            cdf = np.cumsum(np.exp(logp), axis=1)
            u = rng.random((bsz, 1)) * cdf[:, -1:]
            prev = np.minimum((cdf < u).sum(axis=1), CLASSES - 1)
        codes[:, t] = prev
    waves = [
        Waveform(mulaw_decode(codes[b, : f.num_frames * hop]), model.sample_rate)
        for b, f in enumerate(feats)
    ]
    return waves[0] if single else waves
