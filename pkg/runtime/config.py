# runtime/config.py — OneDF v1
"""
Run configuration: model, synthetic data, training, splits, ablation grid.

Config file: one JSON object with optional sections
  {"model": {...}, "synthetic": {...}, "train": {...}, "split": {...}, "ablation": {...}}

Missing keys take the defaults below. Unknown sections or keys are hard
errors naming the dotted key (e.g. "model.windw"), so a typo in an ablation
switch never silently trains the wrong model.

Public API:
  ModelConfig, SyntheticConfig, TrainConfig, SplitConfig, AblationConfig, RunConfig
  load_config(path) / config_from_dict(data) / threads_from_env()
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from former.errors import ConfigError

TEMPORAL_MODES = ("off", "simple_mix", "attention")
MIXERS = ("attention", "conv")
SPATIAL_MIXERS = ("conv", "attention")

# Searched values reported for the full-size tracker. Kept as a record only;
# the desk defaults below are what actually runs.
REFERENCE_MODEL: dict = {"feature_dim": 256, "heatmap_dim": 512, "window": 10, "blocks": 2, "heads": 4}
REFERENCE_TRAIN: dict = {"lambda_h": 0.9, "lambda_c": 0.1, "epochs": 64, "batch_size": 10}


# ── Model ──────────────────────────────────────────────────────────────────────

@dataclass
class ModelConfig:
    num_landmarks: int = 14      # N
    feature_dim:   int = 32      # L
    heatmap_dim:   int = 64      # D
    window:        int = 6       # W
    blocks:        int = 2       # M
    heads:         int = 4       # H
    image_size:    int = 64      # S (px)
    sigma_h:       float = 1.5   # label σ in bins
    kernel_size:   int = 3       # κ for structural / temporal conv mixers

    # ── Ablation switches ────────────────────────────────────────────────────
    temporal:       str = "attention"   # off | simple_mix | attention
    recurrence:     bool = True
    confidence:     bool = True
    intra_group:    bool = True
    inter_group:    bool = True
    spatial_mixer:  str = "conv"        # conv | attention
    temporal_mixer: str = "attention"   # attention | conv

    @property
    def head_dim(self) -> int:
        return self.feature_dim // self.heads

    @property
    def uses_confidence(self) -> bool:
        """Confidence branches exist only where something consumes their scores."""
        return self.temporal == "attention" and self.temporal_mixer == "attention" and self.confidence

    def validate(self) -> None:
        _require(self.num_landmarks >= 2, "model.num_landmarks", "must be >= 2")
        _require(self.feature_dim >= 2, "model.feature_dim", "must be >= 2")
        _require(self.heads >= 1 and self.feature_dim % self.heads == 0,
                 "model.heads", f"must divide feature_dim={self.feature_dim}")
        _require(self.heatmap_dim >= 8, "model.heatmap_dim", "must be >= 8")
        _require(self.window >= 1, "model.window", "must be >= 1")
        _require(self.blocks >= 1, "model.blocks", "must be >= 1")
        _require(self.image_size >= 32 and self.image_size % 16 == 0,
                 "model.image_size", "must be >= 32 and a multiple of 16")
        _require(self.sigma_h > 0, "model.sigma_h", "must be > 0")
        _require(self.kernel_size >= 1 and self.kernel_size % 2 == 1, "model.kernel_size", "must be odd")
        _require(self.temporal in TEMPORAL_MODES, "model.temporal", f"must be one of {TEMPORAL_MODES}")
        _require(self.temporal_mixer in MIXERS, "model.temporal_mixer", f"must be one of {MIXERS}")
        _require(self.spatial_mixer in SPATIAL_MIXERS, "model.spatial_mixer", f"must be one of {SPATIAL_MIXERS}")
        if self.intra_group:
            _require(self.num_landmarks >= 7, "model.num_landmarks", "intra-group encoding needs >= 7 landmarks")


# ── Synthetic benchmark ────────────────────────────────────────────────────────

@dataclass
class SyntheticConfig:
    num_landmarks:   int = 14
    image_size:      int = 64
    sequence_length: int = 40
    heatmap_dim:     int = 64
    sigma_h:         float = 1.5

    translation_amp: float = 0.8     # px / frame
    rotation_amp:    float = 0.01    # rad / frame
    jitter_sigma:    float = 0.3     # px, per-landmark random-walk step
    blob_sigma:      float = 2.0     # px

    occlusion_rate:  float = 0.06    # new events per frame
    patch_min:       int = 10        # px
    patch_max:       int = 24
    duration_min:    int = 3         # frames
    duration_max:    int = 8
    seed:            int = 0

    def validate(self) -> None:
        _require(self.num_landmarks >= 2, "synthetic.num_landmarks", "must be >= 2")
        _require(self.image_size >= 32, "synthetic.image_size", "must be >= 32")
        _require(self.sequence_length >= 2, "synthetic.sequence_length", "must be >= 2")
        _require(self.heatmap_dim >= 8, "synthetic.heatmap_dim", "must be >= 8")
        _require(self.sigma_h > 0, "synthetic.sigma_h", "must be > 0")
        _require(self.blob_sigma > 0, "synthetic.blob_sigma", "must be > 0")
        _require(0.0 <= self.occlusion_rate <= 1.0, "synthetic.occlusion_rate", "must lie in [0, 1]")
        _require(1 <= self.patch_min <= self.patch_max, "synthetic.patch_min", "needs 1 <= patch_min <= patch_max")
        _require(1 <= self.duration_min <= self.duration_max,
                 "synthetic.duration_min", "needs 1 <= duration_min <= duration_max")
        for key in ("translation_amp", "rotation_amp", "jitter_sigma"):
            _require(getattr(self, key) >= 0, f"synthetic.{key}", "must be >= 0")

    def with_seed(self, seed: int) -> "SyntheticConfig":
        return dataclasses.replace(self, seed=seed)


# Fields a synthetic section may not set: they follow the model.
_SHARED_WITH_MODEL = ("num_landmarks", "image_size", "heatmap_dim", "sigma_h")


# ── Training ───────────────────────────────────────────────────────────────────

@dataclass
class TrainConfig:
    lambda_h:      float = 0.9
    lambda_c:      float = 0.1
    epochs:        int = 16
    learning_rate: float = 1e-3
    beta1:         float = 0.9
    beta2:         float = 0.999
    eps:           float = 1e-8
    batch_size:    int = 4       # sequences per optimizer step; losses are averaged across them
    seed:          int = 0
    static_pretrain_epochs: int = 0

    def validate(self) -> None:
        _require(self.lambda_h >= 0, "train.lambda_h", "must be >= 0")
        _require(self.lambda_c >= 0, "train.lambda_c", "must be >= 0")
        _require(self.epochs >= 2 and self.epochs % 2 == 0, "train.epochs", "must be even and >= 2")
        _require(self.learning_rate > 0, "train.learning_rate", "must be > 0")
        _require(0 <= self.beta1 < 1, "train.beta1", "must lie in [0, 1)")
        _require(0 <= self.beta2 < 1, "train.beta2", "must lie in [0, 1)")
        _require(self.eps > 0, "train.eps", "must be > 0")
        _require(self.batch_size >= 1, "train.batch_size", "must be >= 1")
        _require(self.static_pretrain_epochs >= 0, "train.static_pretrain_epochs", "must be >= 0")


@dataclass
class SplitConfig:
    train: int = 20
    val:   int = 5
    test:  int = 5

    def validate(self) -> None:
        for key in ("train", "val", "test"):
            _require(getattr(self, key) >= 1, f"split.{key}", "must be >= 1")


# ── Ablation grid ──────────────────────────────────────────────────────────────

DEFAULT_SETTINGS = [
    "BL", "BL+TE-a", "BL+TE-r", "BL+TE-c", "BL+TE",
    "BL+IR", "BL+IT", "BL+IR+IT", "BL+TE+IR", "BL+TE+IT", "BL+TE+IR+IT",
]
DEFAULT_MIXERS = ["T_Att&S_Conv", "T_Att&S_Att", "T_Conv&S_Conv", "T_Conv&S_Att"]


@dataclass
class AblationConfig:
    settings:     List[str] = field(default_factory=lambda: list(DEFAULT_SETTINGS))
    window_sweep: List[int] = field(default_factory=lambda: [2, 4, 6, 8, 10])
    mixers:       List[str] = field(default_factory=lambda: list(DEFAULT_MIXERS))
    seeds:        List[int] = field(default_factory=lambda: [0, 1, 2])

    def validate(self) -> None:
        _require(len(self.seeds) >= 1, "ablation.seeds", "needs at least one seed")
        _require(all(w >= 1 for w in self.window_sweep), "ablation.window_sweep", "windows must be >= 1")


# ── Aggregate ──────────────────────────────────────────────────────────────────

@dataclass
class RunConfig:
    model:     ModelConfig = field(default_factory=ModelConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    train:     TrainConfig = field(default_factory=TrainConfig)
    split:     SplitConfig = field(default_factory=SplitConfig)
    ablation:  AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> "RunConfig":
        for section in (self.model, self.synthetic, self.train, self.split, self.ablation):
            section.validate()
        return self

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        """--seed overrides both the training and the generator seed."""
        if seed is None:
            return self
        return dataclasses.replace(
            self,
            train=dataclasses.replace(self.train, seed=seed),
            synthetic=dataclasses.replace(self.synthetic, seed=seed),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "model":     ModelConfig,
    "synthetic": SyntheticConfig,
    "train":     TrainConfig,
    "split":     SplitConfig,
    "ablation":  AblationConfig,
}


def _require(ok: bool, key: str, message: str) -> None:
    if not ok:
        raise ConfigError(message, key)


def _coerce(key: str, default: Any, value: Any) -> Any:
    """Check a JSON value against the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", key)
        return [_coerce(f"{key}[{i}]", default[0], v) if default else v for i, v in enumerate(value)]
    return value


def _build_section(name: str, cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError("section must be a JSON object", name)
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    values = {}
    for key, value in data.items():
        dotted = f"{name}.{key}"
        if key not in known:
            raise ConfigError("unknown key", dotted)
        if name == "synthetic" and key in _SHARED_WITH_MODEL:
            raise ConfigError(f"set this under 'model.{key}'; data follows the model", dotted)
        values[key] = _coerce(dotted, getattr(defaults, key), value)
    return dataclasses.replace(defaults, **values)


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object", "<root>")
    sections = {}
    for name, payload in data.items():
        if name not in _SECTIONS:
            raise ConfigError("unknown section", name)
        sections[name] = _build_section(name, _SECTIONS[name], payload)
    cfg = RunConfig(**sections)
    shared = {k: getattr(cfg.model, k) for k in _SHARED_WITH_MODEL}
    cfg.synthetic = dataclasses.replace(cfg.synthetic, **shared)
    return cfg.validate()


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a JSON config file; None returns the validated defaults."""
    if path is None:
        return config_from_dict({})
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}", "--config")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno} col {e.colno}: {e.msg}", "--config") from None
    return config_from_dict(data)


def model_config_from_dict(data: Dict[str, Any]) -> ModelConfig:
    """Rebuild a ModelConfig from a checkpoint's JSON trailer."""
    cfg = _build_section("model", ModelConfig, data)
    cfg.validate()
    return cfg


def train_config_from_dict(data: Dict[str, Any]) -> TrainConfig:
    cfg = _build_section("train", TrainConfig, data)
    cfg.validate()
    return cfg


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("ONEDF_THREADS", "")
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"expected a positive integer, got {raw!r}", "ONEDF_THREADS") from None
    if n < 1:
        raise ConfigError(f"expected a positive integer, got {n}", "ONEDF_THREADS")
    return n
