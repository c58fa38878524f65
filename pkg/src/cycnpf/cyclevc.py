"""Cyclic spectral conversion between synthetic and natural features.

Two conversion modules with the same architecture:

* StoT maps synthetic conditioning frames (50-dim) to natural mcep shape
  coefficients (45-dim);
* TtoS maps natural frames to synthetic-looking mcep.

Training minimises ``L1(StoT(A) - B) + rho * L1(StoT(TtoS(B)) - B)``. At test
time ``enhance`` runs StoT on synthetic features and ``pseudo_vc`` runs the
cycle path on natural features, which keeps the natural timing.

Each module: a 1x1 conv, two 3-tap convs with dilation 3, a single-layer GRU
whose input also carries the previous output frame, and two 1x1 output convs.
Training feeds the ground-truth previous frame; inference feeds back the
module's own output.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Adam, Graph, Tensor, load_checkpoint, ops, save_checkpoint
from .autodiff.init import gru_recurrent, scaled_uniform
from .autodiff.ops import _gru_step
from .dsp.features import COND_DIM, FeatureSequence

logger = logging.getLogger(__name__)

DEFAULT_RHO = 1e-8
OUT_DIM = COND_DIM - 5


class TrainingAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class ConversionModuleConfig:
    in_dim: int = COND_DIM
    out_dim: int = OUT_DIM
    conv_channels: int = 64
    kernel: int = 3
    dilation: int = 3
    gru_hidden: int = 128
    gru_layers: int = 1
    out_hidden: int = 64
    ar_feedback: bool = True

    def __post_init__(self):
        if self.dilation != 3 or self.kernel != 3:
            raise ValueError("input convs are 3-tap with dilation 3")
        if self.gru_layers != 1:
            raise ValueError("one GRU layer")


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    rho: float = DEFAULT_RHO
    grad_clip: float = 10.0
    keep_best: bool = True


def _shift(frames: np.ndarray) -> np.ndarray:
    """Previous-frame feedback: row t holds frame t-1, zeros at t = 0."""
    out = np.zeros_like(frames)
    out[1:] = frames[:-1]
    return out


class ConversionModule:
    """One conversion network; parameters live in a shared :class:`Graph`."""

    def __init__(self, graph: Graph, prefix: str, config: ConversionModuleConfig, rng: np.random.Generator):
        self.graph = graph
        self.prefix = prefix
        self.config = config
        c, h, o = config.conv_channels, config.gru_hidden, config.out_hidden
        fb = config.out_dim if config.ar_feedback else 0
        p = self._p
        p("in.w", scaled_uniform(rng, (1, config.in_dim, c), config.in_dim))
        p("in.b", np.zeros(c))
        p("dil1.w", scaled_uniform(rng, (3, c, c), 3 * c))
        p("dil1.b", np.zeros(c))
        p("dil2.w", scaled_uniform(rng, (3, c, c), 3 * c))
        p("dil2.b", np.zeros(c))
        p("gru.w_ih", scaled_uniform(rng, (c + fb, 3 * h), c + fb))
        p("gru.w_hh", gru_recurrent(rng, h))
        p("gru.b_ih", np.zeros(3 * h))
        p("gru.b_hh", np.zeros(3 * h))
        p("out1.w", scaled_uniform(rng, (1, h, o), h))
        p("out1.b", np.zeros(o))
        p("out2.w", scaled_uniform(rng, (1, o, config.out_dim), o))
        p("out2.b", np.zeros(config.out_dim))

    def _p(self, name, value):
        return self.graph.param(f"{self.prefix}.{name}", value)

    def w(self, name) -> Tensor:
        return self.graph[f"{self.prefix}.{name}"]

    def names(self):
        return [k for k in self.graph if k.startswith(self.prefix + ".")]

    def _encode(self, x):
        w = self.w
        h = ops.conv1d(x, w("in.w"), w("in.b"))
        h = ops.leaky_relu(ops.conv1d(h, w("dil1.w"), w("dil1.b"), dilation=3))
        return ops.leaky_relu(ops.conv1d(h, w("dil2.w"), w("dil2.b"), dilation=3))

    def _decode(self, hs):
        w = self.w
        y = ops.leaky_relu(ops.conv1d(hs, w("out1.w"), w("out1.b")))
        return ops.conv1d(y, w("out2.w"), w("out2.b"))

    def forward_teacher(self, x, prev) -> Tensor:
        """Differentiable pass over normalised ``x[1, T, 50]`` given feedback frames ``prev[1, T, 45]``."""
        if x.shape[-1] != self.config.in_dim:
            raise ValueError(f"expected input width {self.config.in_dim}, got {x.shape[-1]}")
        enc = self._encode(x)
        if self.config.ar_feedback:
            enc = ops.concat([enc, prev], axis=-1)
        h0 = np.zeros((x.shape[0], self.config.gru_hidden), dtype=self.graph.dtype)
        w = self.w
        hs = ops.gru_sequence(enc, h0, w("gru.w_ih"), w("gru.w_hh"), w("gru.b_ih"), w("gru.b_hh"))
        return self._decode(hs)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Free-running inference on normalised ``x[T, 50]``; returns ``[T, 45]``."""
        x = np.asarray(x, dtype=self.graph.dtype)
        if x.ndim != 2 or x.shape[1] != self.config.in_dim:
            raise ValueError(f"expected input [T, {self.config.in_dim}], got {x.shape}")
        enc = self._encode(Tensor(x[None])).data[0]
        d = lambda n: self.w(n).data  # noqa: E731
        hid = self.config.gru_hidden
        w_ih, w_hh, b_ih, b_hh = d("gru.w_ih"), d("gru.w_hh"), d("gru.b_ih"), d("gru.b_hh")
        o1w, o1b, o2w, o2b = d("out1.w")[0], d("out1.b"), d("out2.w")[0], d("out2.b")
        c = self.config.conv_channels
        enc_proj = enc @ w_ih[:c] + b_ih
        w_fb = w_ih[c:]
        h = np.zeros((1, hid), dtype=x.dtype)
        y = np.zeros((1, self.config.out_dim), dtype=x.dtype)
        out = np.empty((x.shape[0], self.config.out_dim), dtype=x.dtype)
        for t in range(x.shape[0]):
            xp = enc_proj[t : t + 1]
            if self.config.ar_feedback:
                xp = xp + y @ w_fb
            h, _ = _gru_step(xp, h, w_hh, b_hh, hid)
            z = h @ o1w + o1b
            z = np.where(z > 0, z, 0.2 * z)
            y = z @ o2w + o2b
            out[t] = y[0]
        return out


def _f32(x):
    return np.asarray(x, dtype=np.float32).astype(np.float64)


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, frames: np.ndarray) -> "Normalizer":
        frames = np.asarray(frames, dtype=np.float64)
        std = frames.std(axis=0)
        std[std < 1e-8] = 1.0
        # float32-representable so a reloaded checkpoint behaves identically
        return cls(_f32(frames.mean(axis=0)), _f32(std))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, x):
        return (x - self.mean) / self.std

    def invert(self, z):
        return z * self.std + self.mean


def _cond(x) -> np.ndarray:
    return x.conditioning() if isinstance(x, FeatureSequence) else np.asarray(x, dtype=np.float64)


class CycleVcModel:
    """StoT and TtoS modules, cycle weight ``rho`` and feature normalisation."""

    kind = "cyclevc"

    def __init__(self, config: ConversionModuleConfig = ConversionModuleConfig(), rho: float = DEFAULT_RHO,
                 seed: int = 0, dtype=np.float32, normalizer: Normalizer | None = None):
        if rho < 0:
            raise ValueError("rho must be >= 0")
        self.config = config
        self.rho = rho
        self.seed = seed
        self.graph = Graph(dtype)
        rng = np.random.default_rng(seed)
        self.stot = ConversionModule(self.graph, "stot", config, rng)
        self.ttos = ConversionModule(self.graph, "ttos", config, rng)
        self.norm = normalizer or Normalizer.identity(config.in_dim)
        self.history: dict = {"train": [], "valid": [], "best_epoch": None}

    # normalisation helpers
    def _in(self, cond):
        return self.norm.apply(cond).astype(self.graph.dtype)

    def _out_norm(self, mcep_shape):
        return ((mcep_shape - self.norm.mean[:OUT_DIM]) / self.norm.std[:OUT_DIM]).astype(self.graph.dtype)

    def _out_denorm(self, y):
        return y * self.norm.std[:OUT_DIM] + self.norm.mean[:OUT_DIM]

    # inference
    def convert_stot(self, cond: np.ndarray) -> np.ndarray:
        return self._out_denorm(self.stot.forward(self._in(cond)).astype(np.float64))

    def convert_ttos(self, cond: np.ndarray) -> np.ndarray:
        return self._out_denorm(self.ttos.forward(self._in(cond)).astype(np.float64))

    def convert_cycle(self, cond: np.ndarray) -> np.ndarray:
        mid = np.concatenate([self.convert_ttos(cond), cond[:, OUT_DIM:]], axis=1)
        return self.convert_stot(mid)

    def enhance(self, synthetic: FeatureSequence) -> FeatureSequence:
        """Replace mcep shape coefficients with the StoT conversion; other streams pass through."""
        return synthetic.with_mcep_shape(self.convert_stot(synthetic.conditioning()))

    def pseudo_vc(self, natural: FeatureSequence) -> FeatureSequence:
        """Replace mcep shape coefficients with StoT(TtoS(natural)); timing stays natural."""
        return natural.with_mcep_shape(self.convert_cycle(natural.conditioning()))

    # training objective
    def loss_terms(self, a, b):
        """Differentiable ``(stot_l1, cycle_l1)`` for one aligned pair."""
        a_cond, b_cond = _cond(a), _cond(b)
        if a_cond.shape[0] != b_cond.shape[0]:
            raise ValueError(f"cycle_loss: frame counts differ ({a_cond.shape[0]} vs {b_cond.shape[0]})")
        dt = self.graph.dtype
        b_mcep = b_cond[:, :OUT_DIM]
        a_in = Tensor(self._in(a_cond)[None])
        b_in = Tensor(self._in(b_cond)[None])
        b_fb = Tensor(_shift(self._out_norm(b_mcep))[None])
        a_fb = Tensor(_shift(self._out_norm(a_cond[:, :OUT_DIM]))[None])
        target = Tensor(self._out_norm(b_mcep)[None])
        scale = Tensor(self.norm.std[:OUT_DIM].astype(dt))

        def raw_l1(pred):
            # L1 in the un-normalised mcep domain
            return ops.mean(ops.absolute(ops.mul(ops.add(pred, ops.neg(target)), scale)))

        l_st = raw_l1(self.stot.forward_teacher(a_in, b_fb))
        mid = self.ttos.forward_teacher(b_in, a_fb)
        # TtoS output shares the mcep normalisation of StoT's first 45 inputs
        rest = Tensor(b_in.data[:, :, OUT_DIM:])
        l_cyc = raw_l1(self.stot.forward_teacher(ops.concat([mid, rest], axis=-1), b_fb))
        return l_st, l_cyc

    def cycle_loss(self, a, b, rho: float | None = None) -> Tensor:
        rho = self.rho if rho is None else rho
        l_st, l_cyc = self.loss_terms(a, b)
        return ops.add(l_st, ops.scale(l_cyc, rho))

    # persistence
    def hyper(self) -> dict:
        return {"module": asdict(self.config), "rho": self.rho, "seed": self.seed}

    def save(self, stem, extra: dict | None = None):
        params = OrderedDict(self.graph.state())
        params["norm.mean"] = self.norm.mean
        params["norm.std"] = self.norm.std
        info = {"history": self.history, "io_dims": [self.config.in_dim, self.config.out_dim]}
        info.update(extra or {})
        return save_checkpoint(stem, self.kind, params, self.hyper(), info)

    @classmethod
    def load(cls, stem) -> "CycleVcModel":
        manifest, params = load_checkpoint(stem, cls.kind)
        hp = manifest["hyperparameters"]
        norm = Normalizer(params.pop("norm.mean").astype(np.float64), params.pop("norm.std").astype(np.float64))
        model = cls(ConversionModuleConfig(**hp["module"]), hp["rho"], hp["seed"], normalizer=norm)
        model.graph.load_state(params)
        model.history = manifest["extra"].get("history", model.history)
        return model


def _clip_grads(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm and total > max_norm:
        for g in grads.values():
            g *= max_norm / total
    return total


def train_cyclevc(pairs, config: ConversionModuleConfig = ConversionModuleConfig(),
                  train_config: TrainConfig = TrainConfig(), seed: int = 0, valid_pairs=None,
                  normalizer: Normalizer | None = None, dtype=np.float32) -> CycleVcModel:
    """Fit a :class:`CycleVcModel` on aligned (synthetic, natural) pairs.

    Utterances are visited one at a time in a seeded random order. Normalisation
    statistics come from the natural side. When validation pairs are given and
    ``keep_best`` is set, the parameters with the lowest validation loss are
    kept. Per-epoch averages go to ``model.history``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("train_cyclevc: no training pairs")
    if normalizer is None:
        normalizer = Normalizer.fit(np.concatenate([_cond(b) for _, b in pairs], axis=0))
    model = CycleVcModel(config, train_config.rho, seed, dtype, normalizer)
    rho = train_config.rho
    # Adam is invariant to gradient scale except through eps; TtoS only sees the
    # rho-weighted cycle term, so its eps is scaled by rho to keep it trainable.
    eps_over = {n: 1e-8 * rho for n in model.ttos.names()} if rho > 0 else None
    opt = Adam(model.graph.params, lr=train_config.lr, eps=1e-8, eps_overrides=eps_over)
    rng = np.random.default_rng(seed + 1)
    best = (np.inf, None)
    for epoch in range(1, train_config.epochs + 1):
        sums = np.zeros(3)
        for batch, k in enumerate(rng.permutation(len(pairs))):
            a, b = pairs[k]
            l_st, l_cyc = model.loss_terms(a, b)
            total = ops.add(l_st, ops.scale(l_cyc, rho))
            values = (float(total.data), float(l_st.data), float(l_cyc.data))
            if not np.all(np.isfinite(values)):
                raise TrainingAborted(
                    f"non-finite Cycle-VC loss at epoch {epoch}, batch {batch}: "
                    f"total={values[0]}, stot={values[1]}, cycle={values[2]}"
                )
            grads = model.graph.backward(total)
            _clip_grads({n: g for n, g in grads.items() if n.startswith("stot.")}, train_config.grad_clip)
            _clip_grads({n: g for n, g in grads.items() if n.startswith("ttos.")},
                        train_config.grad_clip * max(rho, 0.0))
            opt.step(grads)
            sums += values
        avg = sums / len(pairs)
        model.history["train"].append({"epoch": epoch, "total": avg[0], "stot": avg[1], "cycle": avg[2]})
        if valid_pairs:
            v = np.mean([[float(t.data) for t in model.loss_terms(a, b)] for a, b in valid_pairs], axis=0)
            model.history["valid"].append({"epoch": epoch, "total": v[0] + rho * v[1], "stot": v[0], "cycle": v[1]})
            if train_config.keep_best and v[0] + rho * v[1] < best[0]:
                best = (v[0] + rho * v[1], model.graph.state())
                model.history["best_epoch"] = epoch
        logger.info("cyclevc epoch %d: train %.4f (stot %.4f, cycle %.4f)", epoch, *avg)
    if best[1] is not None:
        model.graph.load_state(best[1])
    return model
