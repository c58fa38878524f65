"""Experiment configuration: nested dataclasses loaded strictly from YAML."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

CONDITIONS = ("UB", "AM", "TM", "NPF", "NPF_cascade")
VOCODERS = ("wavenet", "pwg")
CYCVC_MODES = ("cvc_m", "cvc_p")
PRETRAIN = ("none", "external")
PF_DOMAINS = ("feature", "waveform")


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticCorpus:
    utterances: int = 30
    seconds: float = 0.8
    seed: int = 0


@dataclass
class CorpusConfig:
    natural_dir: str | None = None
    external_dir: str | None = None
    synthetic: SyntheticCorpus = field(default_factory=SyntheticCorpus)
    max_fail_ratio: float = 0.05


@dataclass
class SplitConfig:
    train: int = 24
    valid: int = 3
    test: int = 3
    seed: int = 0


@dataclass
class ProfileConfig:
    name: str = "default"
    smooth_kernel_len: int = 5
    gv_scale: float = 0.6
    jitter_max: int = 2
    jitter_segment_len: int = 12
    duration_mode: str = "oracle"
    noise_floor: float = 0.02
    seed: int = 0


@dataclass
class CycleVcSection:
    epochs: int = 50
    lr: float = 1e-3
    rho: float = 1e-8
    conv_channels: int = 64
    gru_hidden: int = 128
    out_hidden: int = 64
    grad_clip: float = 10.0


@dataclass
class WaveNetSection:
    dilation_cycles: list = field(default_factory=lambda: [[2**i for i in range(10)]] * 2)
    residual_channels: int = 64
    skip_channels: int = 64
    steps: int = 2000
    batch_size: int = 4
    segment_frames: int = 10
    lr: float = 2e-3
    grad_clip: float = 10.0


@dataclass
class PwgSection:
    gen_layers: int = 20
    gen_cycles: int = 2
    channels: int = 32
    disc_layers: int = 8
    disc_channels: int = 32
    lambda_adv: float = 4.0
    stft_resolutions: list = field(default_factory=lambda: [[512, 50, 240], [1024, 120, 600], [2048, 240, 1200]])
    steps: int = 1000
    batch_size: int = 2
    segment_frames: int = 20
    gen_lr: float = 1e-3
    disc_lr: float = 1e-4
    warmup_fraction: float = 0.1
    grad_clip: float = 10.0


@dataclass
class PretrainSection:
    variants: int = 4
    steps: int = 1000


@dataclass
class GenerationSection:
    sampling: str = "argmax"
    temperature: float = 1.0


@dataclass
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    conditions: list = field(default_factory=lambda: ["UB", "AM", "TM", "NPF"])
    cycvc_mode: str = "cvc_m"
    vocoder: str = "wavenet"
    pretrain: str = "none"
    cascade_pf_domain: str = "feature"
    postfilter_beta: float = 0.4
    seeds: list = field(default_factory=lambda: [0])
    cycvc: CycleVcSection = field(default_factory=CycleVcSection)
    wavenet: WaveNetSection = field(default_factory=WaveNetSection)
    pwg: PwgSection = field(default_factory=PwgSection)
    pretraining: PretrainSection = field(default_factory=PretrainSection)
    generation: GenerationSection = field(default_factory=GenerationSection)

    def validate(self) -> "ExperimentConfig":
        bad = [c for c in self.conditions if c not in CONDITIONS]
        if bad or not self.conditions:
            raise ConfigError(f"conditions must be a non-empty subset of {CONDITIONS}, got {self.conditions}")
        if len(set(self.conditions)) != len(self.conditions):
            raise ConfigError("duplicate condition")
        for name, value, allowed in [
            ("vocoder", self.vocoder, VOCODERS),
            ("cycvc_mode", self.cycvc_mode, CYCVC_MODES),
            ("pretrain", self.pretrain, PRETRAIN),
            ("cascade_pf_domain", self.cascade_pf_domain, PF_DOMAINS),
            ("profile.duration_mode", self.profile.duration_mode, ("oracle", "predicted")),
            ("generation.sampling", self.generation.sampling, ("argmax", "categorical")),
        ]:
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        predicted = self.profile.duration_mode == "predicted"
        if self.cycvc_mode == "cvc_m" and predicted:
            raise ConfigError("cvc_m trains on directly paired frames and needs an oracle-duration profile")
        if predicted and "TM" in self.conditions:
            raise ConfigError("TM pairs synthetic frames with natural samples and needs oracle durations")
        if min(self.split.train, self.split.test) < 1 or self.split.valid < 0:
            raise ConfigError("split needs at least one train and one test utterance")
        if not self.seeds or any(not isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        if self.postfilter_beta < 0:
            raise ConfigError("postfilter_beta must be >= 0")
        if self.corpus.natural_dir is None:
            needed = self.split.train + self.split.valid + self.split.test
            if self.corpus.synthetic.utterances < needed:
                raise ConfigError(f"synthetic corpus has {self.corpus.synthetic.utterances} utterances, split needs {needed}")
        try:
            _profile(self)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self, *sections) -> str:
        """Short hash of the whole config, or of the named top-level sections only."""
        data = self.to_dict()
        if sections:
            data = {k: data[k] for k in sections}
        return stable_hash(data)


def _profile(cfg):
    from ..ttsim import DegradationProfile

    return DegradationProfile(**dataclasses.asdict(cfg.profile))


def stable_hash(obj, length: int = 16) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:length]


def _build(cls, data, path=""):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING \
            else fields[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    # a single condition may be given under the singular key
    if "condition" in data:
        if "conditions" in data:
            raise ConfigError("give either condition or conditions, not both")
        value = data.pop("condition")
        data["conditions"] = [value] if isinstance(value, str) else value
    try:
        cfg = _build(ExperimentConfig, data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    cfg = config_from_dict(data)
    base = path.parent
    for attr in ("natural_dir", "external_dir"):
        value = getattr(cfg.corpus, attr)
        if value is not None and not os.path.isabs(value):
            setattr(cfg.corpus, attr, str((base / value).resolve()))
    return cfg


def default_workdir() -> Path:
    return Path(os.environ.get("CYCNPF_WORKDIR", "cycnpf_work"))
