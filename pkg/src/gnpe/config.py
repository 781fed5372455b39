"""Declarative experiment configuration with strict validation and provenance.

Configs are JSON files mirroring the nested dataclasses below. Every field
has a default; unknown keys are rejected with a field-level path (silent
hyperparameter typos would invalidate comparisons). The fully resolved
config — defaults materialized, seeds derived — is embedded verbatim in
every output artifact together with its hash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .kernels import Kernel
from .models import MODEL_REGISTRY, ForwardModel, get_model

METHODS = ("npe", "npe-cnn", "gnpe", "chained-npe")


@dataclass
class ModelConfig:
    name: str = "oscillator"
    ramp_coefficient: float = 0.5      # oscillator-approx only
    amp_coupling: float = 0.2          # multichannel only
    noise_sigmas: list | None = None
    prior_lows: list | None = None
    prior_highs: list | None = None


@dataclass
class KernelConfig:
    kind: str = "gaussian"
    widths: list = field(default_factory=lambda: [0.1])


@dataclass
class EstimatorConfig:
    embedding: str = "mlp"
    hidden_sizes: list = field(default_factory=lambda: [128, 32, 16])
    conv_channels: list = field(default_factory=lambda: [6, 12, 12])
    conv_kernel_sizes: list = field(default_factory=lambda: [5, 5, 5])
    pool_size: int = 7
    pool_stride: int = 7
    logstd_min: float = -7.0
    logstd_max: float = 5.0
    standardize_context: str = "per-bin"


@dataclass
class TrainingConfig:
    n_train: int = 10_000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 128
    patience: int = 20
    max_epochs: int = 300
    validation_fraction: float = 0.02


@dataclass
class SamplerConfig:
    n_chains: int = 10_000
    n_samples: int = 10_000            # single-pass methods
    iteration_policy: str = "fixed"
    iterations: int = 11
    max_iterations: int = 30
    js_threshold: float = 0.01
    burn_in: int = 10
    thinning: int = 1
    init_pose: list | None = None      # fixed init; None means use q_init


@dataclass
class MetricsConfig:
    c2st_repetitions: int = 5
    c2st_hidden_multiplier: int = 10
    c2st_max_iter: int = 10_000
    c2st_train_fraction: float = 0.8
    effective_dim_threshold: float = 1e-2
    n_reference: int = 10_000


@dataclass
class SeedsConfig:
    master: int = 0
    simulate: int | None = None
    train: int | None = None
    infer: int | None = None
    observation: int | None = None
    evaluate: int | None = None


@dataclass
class ExperimentConfig:
    method: str = "gnpe"
    model: ModelConfig = field(default_factory=ModelConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    out_dir: str = "outputs"


_SEED_TAGS = ("simulate", "train", "infer", "observation", "evaluate")


def derive_seed(master: int, tag: str) -> int:
    """Stable per-stage seed derived from the master seed."""
    offset = _SEED_TAGS.index(tag)
    return int(np.random.SeedSequence([int(master), offset]).generate_state(1)[0])


def _from_dict(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(
            f"{path or 'config'}: unknown key(s) {sorted(unknown)}; known: {sorted(known)}"
        )
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _SECTION_TYPES
        ):
            section_cls = _SECTION_TYPES[f.type] if isinstance(f.type, str) else f.type
            kwargs[name] = _from_dict(section_cls, value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "ModelConfig": ModelConfig,
    "KernelConfig": KernelConfig,
    "EstimatorConfig": EstimatorConfig,
    "TrainingConfig": TrainingConfig,
    "SamplerConfig": SamplerConfig,
    "MetricsConfig": MetricsConfig,
    "SeedsConfig": SeedsConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, "")
    validate_config(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.method not in METHODS:
        raise ConfigError(f"method: {cfg.method!r} is not one of {METHODS}")
    if cfg.model.name not in MODEL_REGISTRY:
        raise ConfigError(f"model.name: {cfg.model.name!r} is not one of {sorted(MODEL_REGISTRY)}")
    if cfg.kernel.kind not in ("gaussian", "uniform", "delta"):
        raise ConfigError(f"kernel.kind: {cfg.kernel.kind!r} invalid")
    if cfg.kernel.kind != "delta" and any(w <= 0 for w in cfg.kernel.widths):
        raise ConfigError("kernel.widths: widths must be positive")
    lows, highs = cfg.model.prior_lows, cfg.model.prior_highs
    if (lows is None) != (highs is None):
        raise ConfigError("model.prior_lows/model.prior_highs: set both or neither")
    if lows is not None:
        if cfg.model.name == "gaussian-toy":
            raise ConfigError(
                "model.prior_lows: the gaussian-toy prior is fixed (its analytic "
                "posterior depends on it)"
            )
        if len(lows) != len(highs):
            raise ConfigError("model.prior_lows/model.prior_highs: length mismatch")
        for i, (lo, hi) in enumerate(zip(lows, highs)):
            if not lo < hi:
                raise ConfigError(
                    f"model.prior_lows[{i}]/model.prior_highs[{i}]: invalid range [{lo}, {hi}]"
                )
    if cfg.estimator.embedding not in ("identity", "mlp", "conv"):
        raise ConfigError(f"estimator.embedding: {cfg.estimator.embedding!r} invalid")
    if cfg.training.n_train < 2:
        raise ConfigError("training.n_train: need at least 2 simulations")
    if not 0 <= cfg.training.validation_fraction < 1:
        raise ConfigError("training.validation_fraction: must be in [0, 1)")
    if cfg.sampler.thinning < 1:
        raise ConfigError("sampler.thinning: must be >= 1")
    if cfg.sampler.js_threshold <= 0:
        raise ConfigError("sampler.js_threshold: must be positive")
    if cfg.sampler.iteration_policy not in ("fixed", "js"):
        raise ConfigError(f"sampler.iteration_policy: {cfg.sampler.iteration_policy!r} invalid")


def build_model(cfg: ModelConfig) -> ForwardModel:
    kwargs = {}
    if cfg.noise_sigmas is not None:
        kwargs["noise_sigmas"] = cfg.noise_sigmas
    if cfg.prior_lows is not None:
        kwargs["prior_lows"] = cfg.prior_lows
        kwargs["prior_highs"] = cfg.prior_highs
    if cfg.name == "oscillator-approx":
        kwargs["ramp_coefficient"] = cfg.ramp_coefficient
    if cfg.name == "multichannel":
        kwargs["amp_coupling"] = cfg.amp_coupling
    if cfg.name == "gaussian-toy":
        kwargs = {}
    return get_model(cfg.name, **kwargs)


def build_kernel(cfg: KernelConfig) -> Kernel:
    return Kernel(cfg.kind, tuple(cfg.widths))


def resolved_seeds(cfg: SeedsConfig) -> dict:
    out = {"master": cfg.master}
    for tag in _SEED_TAGS:
        explicit = getattr(cfg, tag)
        out[tag] = int(explicit) if explicit is not None else derive_seed(cfg.master, tag)
    return out


def resolve_config(cfg: ExperimentConfig) -> dict:
    """Fully materialized config dict as embedded in every artifact."""
    out = dataclasses.asdict(cfg)
    out["seeds"] = resolved_seeds(cfg.seeds)
    return out


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()
