"""Run configuration: one flat namespace of dotted keys over the per-module configs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .augment import AugmentConfig
from .errors import ConfigError
from .losses import BASELINES, IR_NORMALIZERS, LossWeights
from .nn import EncoderConfig

EVAL_GRAPHS = ("original", "view")
VAL_LOSSES = ("composite", "supervised")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    lr: float = 0.01
    weight_decay: float = 5e-4
    scheduler_patience: int = 100
    early_stop_patience: int = 300
    seed: int = 0
    eval_graph: str = "original"
    val_loss: str = "composite"
    baseline: str | None = None
    ir_normalizer: str = "distinct_pairs"
    vr_stop_gradient: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        if self.scheduler_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patiences must be >= 1")
        if self.eval_graph not in EVAL_GRAPHS:
            raise ConfigError(f"eval_graph must be one of {EVAL_GRAPHS}")
        if self.val_loss not in VAL_LOSSES:
            raise ConfigError(f"val_loss must be one of {VAL_LOSSES}")
        if self.baseline is not None and self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}")
        if self.ir_normalizer not in IR_NORMALIZERS:
            raise ConfigError(f"ir normalizer must be one of {IR_NORMALIZERS}")


# dotted key -> (section, field)
KEYS = {
    "encoder.arch": ("encoder", "arch"),
    "encoder.layers": ("encoder", "layers"),
    "encoder.hidden": ("encoder", "hidden"),
    "encoder.heads": ("encoder", "heads"),
    "encoder.embed_dim": ("encoder", "embed_dim"),
    "encoder.batchnorm_momentum": ("encoder", "batchnorm_momentum"),
    "aug.v1.feature_rate": ("augment", "feature_mask_rate_v1"),
    "aug.v1.edge_rate": ("augment", "edge_mask_rate_v1"),
    "aug.v2.feature_rate": ("augment", "feature_mask_rate_v2"),
    "aug.v2.edge_rate": ("augment", "edge_mask_rate_v2"),
    "aug.seed": ("augment", "seed"),
    "loss.lambda1": ("weights", "lambda1"),
    "loss.lambda2": ("weights", "lambda2"),
    "loss.tau": ("weights", "tau"),
    "loss.conf_threshold": ("weights", "v"),
    "loss.baseline": ("train", "baseline"),
    "ir.normalizer": ("train", "ir_normalizer"),
    "vr.stop_gradient": ("train", "vr_stop_gradient"),
    "sched.val_loss": ("train", "val_loss"),
    "train.epochs": ("train", "epochs"),
    "train.lr": ("train", "lr"),
    "train.weight_decay": ("train", "weight_decay"),
    "train.scheduler_patience": ("train", "scheduler_patience"),
    "train.early_stop_patience": ("train", "early_stop_patience"),
    "train.seed": ("train", "seed"),
    "train.eval_graph": ("train", "eval_graph"),
}

# hyperparameter grids searched by grid_search
SEARCH_GRID = {
    "train.lr": [0.0001, 0.0005, 0.001, 0.005, 0.01, 0.1],
    "loss.tau": [0.05, 0.08, 0.13, 0.16, 0.21, 0.23, 0.26],
    "loss.conf_threshold": [0.6, 0.63, 0.66, 0.7, 0.8, 0.83, 0.9, 0.93, 0.96, 0.99],
    "loss.lambda1": [0.25, 0.35, 0.5, 0.85, 1, 1.5, 2, 2.15, 2.65, 3],
    "loss.lambda2": [0.35, 0.5, 1, 1.25, 1.5, 2.85, 3],
    "aug.v1.feature_rate": [0.4, 0.45, 0.5, 0.6, 0.65, 0.7],
    "aug.v1.edge_rate": [0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7],
    "aug.v2.feature_rate": [0.1, 0.15, 0.2, 0.3, 0.4, 0.45],
    "aug.v2.edge_rate": [0.1, 0.15, 0.2, 0.3, 0.35, 0.4, 0.45],
}


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_flat(self) -> dict:
        return {key: getattr(getattr(self, sec), name) for key, (sec, name) in sorted(KEYS.items())}

    def to_json(self) -> str:
        return json.dumps(self.to_flat(), sort_keys=True, indent=2) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_flat(), sort_keys=True).encode()).hexdigest()[:16]

    def override(self, values: dict) -> "RunConfig":
        """Return a copy with dotted keys replaced (nested dicts are flattened first)."""
        flat = flatten(values)
        unknown = sorted(set(flat) - set(KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        sections = {sec: {} for sec in ("encoder", "augment", "weights", "train")}
        for key, value in flat.items():
            sec, name = KEYS[key]
            sections[sec][name] = _coerce(getattr(self, sec), name, value)
        try:
            return RunConfig(**{sec: replace(getattr(self, sec), **kw) for sec, kw in sections.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_flat(cls, values: dict) -> "RunConfig":
        return cls().override(values)

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_flat(json.load(fh))

    def with_seed(self, seed: int) -> "RunConfig":
        return self.override({"train.seed": int(seed), "aug.seed": int(seed)})

    def augmentation_off(self) -> "RunConfig":
        return self.override({"aug.v1.feature_rate": 0.0, "aug.v1.edge_rate": 0.0,
                              "aug.v2.feature_rate": 0.0, "aug.v2.edge_rate": 0.0})


def flatten(values: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in values.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(section, name, value):
    current = getattr(section, name)
    ftype = {f.name: f.type for f in fields(section)}[name]
    if value is None:
        return None
    if isinstance(current, bool) or ftype == "bool":
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return bool(value)
    if isinstance(value, str) and value.lower() in ("none", "null", ""):
        return None
    try:
        if ftype.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
            return int(value)
        if ftype.startswith("float"):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    return value


def describe(cfg: RunConfig) -> dict:
    return {sec: asdict(getattr(cfg, sec)) for sec in ("encoder", "augment", "weights", "train")}
