"""Pipeline stages: prepare, train-cycvc, train-vocoder, infer, evaluate.

Every stage writes into a content-addressed directory whose name hashes the
config sections and upstream keys it depends on, so two conditions that share
an input (UB and AM share one vocoder) share the artifact, and two that do not
can never read each other's outputs. A completed directory is reused unless
``force`` is set.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path

import numpy as np

from ..align import dtw_align, warp_to_target
from ..corpus import load_wav_dir, synth_corpus
from ..cyclevc import ConversionModuleConfig, CycleVcModel, TrainConfig, train_cyclevc
from ..dsp.audio import read_wav, write_wav
from ..dsp.features import AnalysisConfig, FeatureSequence, assemble_features, load_features, save_features
from ..pwg import PwgConfig, PwgModel, PwgTrainConfig, pwg_synthesize, pwg_train
from ..ttsim import DegradationProfile, conventional_postfilter, make_speaker_variant, oversmooth, time_jitter
from ..wavenet import WaveNetConfig, WaveNetModel, WaveNetTrainConfig, wn_generate, wn_train
from . import report as report_mod
from .config import ExperimentConfig, default_workdir, stable_hash
from .routing import guard_training_source, needs_cycvc, route, training_sources
from .store import RunManifest, building, completion, is_complete

logger = logging.getLogger(__name__)

STAGES = ("prepare", "train-cycvc", "train-vocoder", "infer", "evaluate")
VARIANT_GRID = ((-4.0, 0.9), (-2.0, 0.95), (2.0, 1.05), (4.0, 1.1))


class DataError(RuntimeError):
    pass


class StageFailed(RuntimeError):
    """A training abort, re-raised with the stage it happened in."""


class PartialEvaluation(RuntimeError):
    def __init__(self, report_path, missing):
        super().__init__(f"evaluation is missing outputs for: {', '.join(missing)}")
        self.report_path = report_path
        self.missing = missing


def _json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))


def _read_json(path):
    return json.loads(Path(path).read_text())


def _utt_seed(seed: int, *parts) -> int:
    """Deterministic 32-bit seed for one (run seed, name...) combination."""
    return int(stable_hash([seed, *parts], length=8), 16)


class Run:
    """One (config, seed) pipeline run rooted in a work directory."""

    def __init__(self, config: ExperimentConfig, seed: int | None = None, workdir=None):
        self.config = config.validate()
        self.seed = config.seeds[0] if seed is None else int(seed)
        self.workdir = Path(workdir) if workdir is not None else default_workdir()
        self.analysis = AnalysisConfig()
        self.run_key = stable_hash({"config": config.to_dict(), "seed": self.seed})
        self.run_dir = self.workdir / "runs" / self.run_key
        self.manifest = RunManifest(self.run_dir / "manifest.json", self.run_key, self.seed, config.to_dict())
        self.manifest.save()

    # keys -----------------------------------------------------------------
    @property
    def feature_key(self) -> str:
        c = self.config
        return stable_hash({
            "corpus": dataclasses.asdict(c.corpus), "split": dataclasses.asdict(c.split),
            "profile": dataclasses.asdict(c.profile), "analysis": dataclasses.asdict(self.analysis),
        })

    @property
    def cycvc_key(self) -> str:
        c = self.config
        return stable_hash({"features": self.feature_key, "cycvc": dataclasses.asdict(c.cycvc),
                            "mode": c.cycvc_mode, "seed": self.seed})

    def _vocoder_section(self) -> dict:
        return dataclasses.asdict(getattr(self.config, self.config.vocoder))

    @property
    def pretrain_key(self) -> str | None:
        c = self.config
        if c.pretrain == "none":
            return None
        return stable_hash({"features": self.feature_key, "vocoder": c.vocoder, "section": self._vocoder_section(),
                            "pretraining": dataclasses.asdict(c.pretraining), "external": c.corpus.external_dir,
                            "seed": self.seed})

    def vocoder_key(self, source: str) -> str:
        c = self.config
        return stable_hash({
            "features": self.feature_key, "vocoder": c.vocoder, "section": self._vocoder_section(),
            "source": source, "cycvc": self.cycvc_key if source == "pseudo" else None,
            "pretrain": self.pretrain_key, "seed": self.seed,
        })

    def feature_dir(self) -> Path:
        return self.workdir / "features" / self.feature_key

    def cycvc_dir(self) -> Path:
        return self.workdir / "cycvc" / self.cycvc_key

    def pretrain_dir(self) -> Path:
        return self.workdir / "pretrain" / self.pretrain_key

    def vocoder_dir(self, source: str) -> Path:
        return self.workdir / "vocoders" / self.vocoder_key(source)

    def infer_dir(self) -> Path:
        return self.run_dir / "infer"

    def report_dir(self) -> Path:
        return self.run_dir / "report"

    # requirements ----------------------------------------------------------
    def uses_cycvc(self) -> bool:
        return needs_cycvc(self.config.conditions)

    def vocoder_sources(self) -> list:
        conds = list(self.config.conditions)
        sources = training_sources(conds)
        if "NPF_cascade" in conds and self.config.cascade_pf_domain == "waveform" and "natural" not in sources:
            sources.insert(0, "natural")
        return sources

    def prerequisites(self, stage: str) -> list:
        return {
            "prepare": [],
            "train-cycvc": ["prepare"],
            "train-vocoder": ["prepare"] + (["train-cycvc"] if self.uses_cycvc() else []),
            "infer": ["train-vocoder"],
            "evaluate": ["infer"],
        }[stage]

    # store access ------------------------------------------------------------
    def splits(self) -> dict:
        return _read_json(self.feature_dir() / "splits.json")

    def natural(self, utt) -> FeatureSequence:
        return load_features(self.feature_dir() / "natural" / f"{utt}.cnpf", self.analysis.alpha)

    def synthetic(self, utt) -> FeatureSequence:
        return load_features(self.feature_dir() / "synthetic" / f"{utt}.cnpf", self.analysis.alpha)

    def wave(self, utt):
        return read_wav(self.feature_dir() / "wav" / f"{utt}.wav")

    def cycvc_model(self) -> CycleVcModel:
        return CycleVcModel.load(self.cycvc_dir() / "model")

    def vocoder_model(self, source: str):
        cls = WaveNetModel if self.config.vocoder == "wavenet" else PwgModel
        return cls.load(self.vocoder_dir(source) / "model")

    # driver ----------------------------------------------------------------------
    def run_stage(self, stage: str, force: bool = False) -> dict:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self.manifest.require(stage, self.prerequisites(stage))
        fn = {
            "prepare": self._prepare, "train-cycvc": self._train_cycvc, "train-vocoder": self._train_vocoder,
            "infer": self._infer, "evaluate": self._evaluate,
        }[stage]
        logger.info("stage %s (run %s, seed %d)", stage, self.run_key, self.seed)
        artifacts, digest, stats = fn(force)
        self.manifest.record(stage, artifacts, digest, stats)
        return self.manifest.stages[stage]

    def run_all(self, force: bool = False):
        # train-cycvc always runs: the MCD table needs enhanced and pseudo-VC features
        for stage in STAGES:
            self.run_stage(stage, force)

    def _cached(self, directory: Path, force: bool) -> bool:
        return is_complete(directory) and not force

    # prepare -------------------------------------------------------------------
    def _prepare(self, force):
        c = self.config
        out = self.feature_dir()
        if not self._cached(out, force):
            with building(out) as tmp:
                self._build_features(tmp)
        stats = _read_json(out / "stats.json")
        return {"features": out}, completion(out)["content_hash"], stats

    def _load_corpus(self):
        c = self.config
        if c.corpus.natural_dir is None:
            s = c.corpus.synthetic
            return synth_corpus(s.utterances, s.seconds, s.seed, self.analysis.sample_rate,
                                self.analysis.hop_size), []
        try:
            return load_wav_dir(c.corpus.natural_dir, self.analysis.sample_rate, c.corpus.max_fail_ratio)
        except (FileNotFoundError, ValueError) as exc:
            raise DataError(str(exc)) from None

    def _build_features(self, tmp: Path):
        c = self.config
        utts, errors = self._load_corpus()
        needed = c.split.train + c.split.valid + c.split.test
        if len(utts) < needed:
            raise DataError(f"corpus has {len(utts)} usable utterances, split needs {needed}")
        ids = sorted(u for u, _ in utts)
        order = np.random.default_rng(c.split.seed).permutation(len(ids))
        chosen = [ids[k] for k in order[:needed]]
        splits = {
            "train": sorted(chosen[: c.split.train]),
            "valid": sorted(chosen[c.split.train : c.split.train + c.split.valid]),
            "test": sorted(chosen[c.split.train + c.split.valid :]),
        }
        profile = DegradationProfile(**dataclasses.asdict(c.profile))
        waves = dict(utts)
        for sub in ("wav", "natural", "synthetic"):
            (tmp / sub).mkdir()
        mismatched = 0
        frames = {}
        for utt in sorted(chosen):
            # store PCM16 and analyse what was stored, so every consumer sees the same samples
            write_wav(tmp / "wav" / f"{utt}.wav", waves[utt])
            wave = read_wav(tmp / "wav" / f"{utt}.wav")
            nat = assemble_features(wave, self.analysis)
            syn = degrade(nat, profile, _utt_seed(profile.seed, "degrade", utt))
            save_features(tmp / "natural" / f"{utt}.cnpf", nat)
            save_features(tmp / "synthetic" / f"{utt}.cnpf", syn)
            mismatched += syn.num_frames != nat.num_frames
            frames[utt] = [nat.num_frames, syn.num_frames]
        _json(tmp / "splits.json", splits)
        _json(tmp / "errors.json", errors)
        _json(tmp / "profile.json", {**dataclasses.asdict(profile), "digest": profile.digest()})
        _json(tmp / "stats.json", {
            "utterances": len(chosen), "load_errors": len(errors),
            "frame_mismatch_ratio": mismatched / len(chosen), "frames": frames,
        })

    # train-cycvc -----------------------------------------------------------------
    def _train_cycvc(self, force):
        out = self.cycvc_dir()
        if not self._cached(out, force):
            with building(out) as tmp:
                self._build_cycvc(tmp)
        stats = _read_json(out / "stats.json")
        return {"cycvc": out}, completion(out)["content_hash"], stats

    def _aligned_pairs(self, utts, counter):
        pairs = []
        for utt in utts:
            syn, nat = self.synthetic(utt), self.natural(utt)
            if self.config.cycvc_mode == "cvc_p":
                path = dtw_align(syn.mcep_shape, nat.mcep_shape, zscore=True)
                counter[0] += 1
                syn = warp_to_target(syn, path, nat.num_frames)
            elif syn.num_frames != nat.num_frames:
                raise DataError(f"{utt}: cvc_m needs equal frame counts ({syn.num_frames} vs {nat.num_frames})")
            pairs.append((syn, nat))
        return pairs

    def _build_cycvc(self, tmp: Path):
        c = self.config
        splits = self.splits()
        train_calls, valid_calls = [0], [0]
        train = self._aligned_pairs(splits["train"], train_calls)
        valid = self._aligned_pairs(splits["valid"], valid_calls)
        module = ConversionModuleConfig(conv_channels=c.cycvc.conv_channels, gru_hidden=c.cycvc.gru_hidden,
                                        out_hidden=c.cycvc.out_hidden)
        tc = TrainConfig(epochs=c.cycvc.epochs, lr=c.cycvc.lr, rho=c.cycvc.rho, grad_clip=c.cycvc.grad_clip)
        try:
            model = train_cyclevc(train, module, tc, seed=self.seed, valid_pairs=valid or None)
        except RuntimeError as exc:
            raise StageFailed(f"train-cycvc: {exc}") from exc
        model.save(tmp / "model", extra={"mode": c.cycvc_mode})
        _json(tmp / "stats.json", {
            "mode": c.cycvc_mode, "dtw_calls": train_calls[0], "dtw_calls_valid": valid_calls[0],
            "train_pairs": len(train), "best_epoch": model.history["best_epoch"],
        })

    # train-vocoder ---------------------------------------------------------------
    def training_pairs(self, source: str, condition: str | None = None):
        """(features, natural waveform) pairs for the train split from one routed source."""
        if condition is not None:
            guard_training_source(condition, source)
        utts = self.splits()["train"]
        if source == "natural":
            feats = [self.natural(u) for u in utts]
        elif source == "synthetic":
            feats = [self.synthetic(u) for u in utts]
        elif source == "pseudo":
            cvc = self.cycvc_model()
            feats = [cvc.pseudo_vc(self.natural(u)) for u in utts]
        else:
            raise ValueError(f"{source!r} is not a training source")
        for u, f in zip(utts, feats):
            n = self.natural(u).num_frames
            if f.num_frames != n:
                raise DataError(f"{u}: {source} features have {f.num_frames} frames, waveform has {n}")
        return [(f, self.wave(u)) for f, u in zip(feats, utts)]

    def _new_vocoder(self):
        c = self.config
        if c.vocoder == "wavenet":
            w = c.wavenet
            cfg = WaveNetConfig.from_cycles(w.dilation_cycles, residual_channels=w.residual_channels,
                                            skip_channels=w.skip_channels)
            return WaveNetModel(cfg, seed=self.seed, hop_size=self.analysis.hop_size,
                                sample_rate=self.analysis.sample_rate)
        p = c.pwg
        cfg = PwgConfig(gen_layers=p.gen_layers, gen_cycles=p.gen_cycles, channels=p.channels,
                        disc_layers=p.disc_layers, disc_channels=p.disc_channels, lambda_adv=p.lambda_adv,
                        stft_resolutions=tuple(tuple(r) for r in p.stft_resolutions))
        return PwgModel(cfg, seed=self.seed, hop_size=self.analysis.hop_size, sample_rate=self.analysis.sample_rate)

    def _fit_vocoder(self, model, pairs, steps: int, seed: int):
        c = self.config
        try:
            if c.vocoder == "wavenet":
                w = c.wavenet
                tc = WaveNetTrainConfig(steps=steps, batch_size=w.batch_size, segment_frames=w.segment_frames,
                                        lr=w.lr, grad_clip=w.grad_clip)
                return wn_train(model, pairs, tc, seed=seed)
            p = c.pwg
            tc = PwgTrainConfig(steps=steps, batch_size=p.batch_size, segment_frames=p.segment_frames,
                                gen_lr=p.gen_lr, disc_lr=p.disc_lr, warmup_fraction=p.warmup_fraction,
                                grad_clip=p.grad_clip)
            return pwg_train(model, pairs, tc, seed=seed)
        except RuntimeError as exc:
            raise StageFailed(f"train-vocoder: {exc}") from exc

    def _vocoder_steps(self) -> int:
        return getattr(self.config, self.config.vocoder).steps

    def pretraining_pairs(self):
        c = self.config
        if c.corpus.external_dir is not None:
            try:
                utts, _ = load_wav_dir(c.corpus.external_dir, self.analysis.sample_rate, c.corpus.max_fail_ratio)
            except (FileNotFoundError, ValueError) as exc:
                raise DataError(str(exc)) from None
            waves = [w for _, w in utts]
        else:
            rng = np.random.default_rng(_utt_seed(self.seed, "variants"))
            grid = list(VARIANT_GRID)
            while len(grid) < c.pretraining.variants:
                grid.append((float(rng.uniform(-6, 6)), float(rng.uniform(0.85, 1.15))))
            waves = [make_speaker_variant(self.wave(u), shift, scale)
                     for u in self.splits()["train"] for shift, scale in grid[: c.pretraining.variants]]
        return [(assemble_features(w, self.analysis), w) for w in waves]

    def _pretrain(self, force):
        out = self.pretrain_dir()
        if not self._cached(out, force):
            with building(out) as tmp:
                model = self._new_vocoder()
                self._fit_vocoder(model, self.pretraining_pairs(), self.config.pretraining.steps,
                                  _utt_seed(self.seed, "pretrain"))
                model.save(tmp / "model", extra={"role": "pretrain"})
        return out

    def _train_vocoder(self, force):
        artifacts, stats = {}, {"sources": {}}
        pre = self._pretrain(force) if self.config.pretrain == "external" else None
        if pre is not None:
            artifacts["pretrain"] = pre
        cls = WaveNetModel if self.config.vocoder == "wavenet" else PwgModel
        for source in self.vocoder_sources():
            out = self.vocoder_dir(source)
            if not self._cached(out, force):
                with building(out) as tmp:
                    model = cls.load(pre / "model") if pre is not None else self._new_vocoder()
                    start = model.step
                    self._fit_vocoder(model, self.training_pairs(source), self._vocoder_steps(),
                                      _utt_seed(self.seed, "vocoder", source))
                    model.save(tmp / "model", extra={"source": source, "start_step": start})
                    _json(tmp / "stats.json", {"source": source, "start_step": start, "end_step": model.step,
                                               "final_loss": model.history[-1] if model.history else None})
            artifacts[source] = out
            stats["sources"][source] = _read_json(out / "stats.json")
        digest = stable_hash({k: completion(v)["content_hash"] for k, v in artifacts.items()}, length=64)
        return artifacts, digest, stats

    # infer -------------------------------------------------------------------------
    def test_features(self, condition: str, counters: dict, models: dict | None = None):
        """Routed test features for every test utterance of one condition."""
        src = route(condition, "test")
        utts = self.splits()["test"]
        syn = [self.synthetic(u) for u in utts]
        if src == "natural":
            return [self.natural(u) for u in utts]
        if src == "synthetic":
            return syn
        cvc = self.cycvc_model()
        if src == "enhanced_pf":
            syn = self._postfiltered(syn, models)
        out = []
        for f in syn:
            counters["enhance_calls"][condition] = counters["enhance_calls"].get(condition, 0) + 1
            out.append(cvc.enhance(f))
        return out

    def _postfiltered(self, syn, models):
        beta = self.config.postfilter_beta
        pf = [f.with_mcep(conventional_postfilter(f.mcep, beta, f.alpha)) for f in syn]
        if self.config.cascade_pf_domain == "feature":
            return pf
        # waveform domain: render the post-filtered features and analyse them again
        voc = models["natural"] if models else self.vocoder_model("natural")
        waves = self._generate(voc, pf, "pf-render")
        return [assemble_features(w, self.analysis).take(slice(0, f.num_frames)) for w, f in zip(waves, pf)]

    def _generate(self, model, feats, tag):
        g = self.config.generation
        if self.config.vocoder == "wavenet":
            return wn_generate(model, feats, seed=_utt_seed(self.seed, "generate", tag), sampling=g.sampling,
                               temperature=g.temperature)
        return [pwg_synthesize(model, f, seed=_utt_seed(self.seed, "generate", tag, i)) for i, f in enumerate(feats)]

    def _infer(self, force):
        out = self.infer_dir()
        if not self._cached(out, force):
            with building(out) as tmp:
                counters = {"enhance_calls": {}}
                models = {s: self.vocoder_model(s) for s in self.vocoder_sources()}
                utts = self.splits()["test"]
                lengths = {}
                for cond in self.config.conditions:
                    feats = self.test_features(cond, counters, models)
                    waves = self._generate(models[route(cond, "train")], feats, cond)
                    for u, f, w in zip(utts, feats, waves):
                        if w.samples.size != f.num_frames * self.analysis.hop_size:
                            raise RuntimeError(f"{u}/{cond}: generated length does not match frames")
                        write_wav(tmp / output_name(u, cond, self.config.vocoder), w)
                        lengths[f"{u}__{cond}"] = int(w.samples.size)
                _json(tmp / "stats.json", {**counters, "lengths": lengths})
        return {"outputs": out}, completion(out)["content_hash"], _read_json(out / "stats.json")

    # evaluate ------------------------------------------------------------------------
    def _evaluate(self, force):
        out = self.report_dir()
        if not self._cached(out, force):
            with building(out) as tmp:
                report = report_mod.build_report(self)
                report_mod.write_report(report, tmp)
        data = _read_json(out / "report.json")
        stats = {"missing": data["missing"]}
        digest = completion(out)["content_hash"]
        if data["missing"]:
            self.manifest.record("evaluate", {"report": out}, digest, stats)
            raise PartialEvaluation(out, data["missing"])
        return {"report": out}, digest, stats


def output_name(utt: str, condition: str, vocoder: str) -> str:
    return f"{utt}__{condition}__{vocoder}.wav"


def degrade(natural: FeatureSequence, profile: DegradationProfile, seed: int) -> FeatureSequence:
    """Synthetic-looking features: over-smoothed shape coefficients, then timing jitter."""
    smooth = natural.with_mcep_shape(oversmooth(natural.mcep_shape, profile.smooth_kernel_len, profile.gv_scale,
                                                profile.noise_floor, seed=seed))
    return time_jitter(smooth, profile.jitter_segment_len, profile.jitter_max, profile.duration_mode,
                       seed=seed + 1)
