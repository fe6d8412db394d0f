"""Configuration records for the CAST network, training and experiments."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, replace

from ..augment import AugmentConfig
from ..errors import ValidationError
from ..rtm import PreprocessConfig
from ..spectral import CvdConfig, WindowKind

FUSION_MODES = ("asymmetric", "symmetric", "concat")
STREAM_MODES = ("both", "rtm", "cvd")


@dataclass
class ModelConfig:
    num_classes: int = 126
    use_casa: bool = True
    casa_embed: int = 16
    casa_heads: int = 4
    casa_gate_hidden: int = 8
    casa_positional: bool = False
    encoder_channels: tuple = (16, 32, 64, 128)
    rtm_kernel: int = 3
    cvd_kernel: int = 5
    d_model: int = 512
    fusion_heads: int = 8
    fusion_dropout: float = 0.1
    ffn_ratio: int = 4
    head_dropout: float = 0.3
    fusion: str = "asymmetric"
    streams: str = "both"
    seed: int = 0

    def __post_init__(self):
        self.encoder_channels = tuple(self.encoder_channels)
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.fusion not in FUSION_MODES:
            raise ValidationError(f"fusion must be one of {FUSION_MODES}")
        if self.streams not in STREAM_MODES:
            raise ValidationError(f"streams must be one of {STREAM_MODES}")
        if self.casa_embed % self.casa_heads:
            raise ValidationError("casa_embed must be divisible by casa_heads")
        if self.d_model % self.fusion_heads:
            raise ValidationError("d_model must be divisible by fusion_heads")


@dataclass
class TrainConfig:
    lr: float = 3e-4
    weight_decay: float = 0.05
    epochs: int = 70
    warmup_epochs: int = 5
    min_lr_frac: float = 0.01
    grad_clip: float = 1.0
    label_smoothing: float = 0.1
    lambda_aux: float = 0.3
    swa_start_frac: float = 0.8
    ema_decay: float = 0.9995
    batch_size: int = 48
    seed: int = 42
    use_swa_ema: bool = True
    top_k: int = 5
    mix_free_epochs: int = 3

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValidationError("warmup_epochs must be smaller than epochs")
        for name in ("lr", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.weight_decay < 0 or self.lambda_aux < 0:
            raise ValidationError("weight_decay and lambda_aux must be non-negative")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValidationError("label_smoothing must lie in [0, 1)")
        if not 0.0 < self.min_lr_frac <= 1.0:
            raise ValidationError("min_lr_frac must lie in (0, 1]")
        if not 0.0 <= self.swa_start_frac <= 1.0:
            raise ValidationError("swa_start_frac must lie in [0, 1]")

    @property
    def swa_start_epoch(self) -> int:
        return int(round(self.swa_start_frac * self.epochs))


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    cvd: CvdConfig = field(default_factory=CvdConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def to_dict(self) -> dict:
        cvd = asdict(self.cvd)
        cvd["window"] = self.cvd.window.value
        model = asdict(self.model)
        model["encoder_channels"] = list(self.model.encoder_channels)
        return {
            "model": model,
            "train": asdict(self.train),
            "preprocess": asdict(self.preprocess),
            "cvd": cvd,
            "augment": self.augment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Overlay the (possibly partial) nested dict ``d`` onto ``base``."""
        base = copy.deepcopy(base) if base is not None else cls()
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for section in known:
            current = getattr(base, section)
            overrides = d.get(section, {})
            valid = {f.name for f in fields(current)}
            bad = set(overrides) - valid
            if bad:
                raise ValidationError(f"unknown keys in '{section}': {sorted(bad)}")
            if section == "augment" and "enabled" in overrides:
                overrides = dict(overrides)
                overrides["enabled"] = {**current.enabled, **overrides["enabled"]}
            if section == "cvd" and "window" in overrides:
                overrides = dict(overrides, window=WindowKind.parse(overrides["window"]))
            parts[section] = replace(current, **overrides)
        return cls(**parts)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def paper_config(num_classes: int = 126) -> ExperimentConfig:
    """Hyperparameters at the published scale (224 px inputs, 70 epochs)."""
    return ExperimentConfig(model=ModelConfig(num_classes=num_classes))


def desk_config(num_classes: int = 8, seed: int = 42) -> ExperimentConfig:
    """Small CPU-friendly setting used by the tests and the CLI defaults.

    Differences from :func:`paper_config`: 32 px inputs, 20 epochs with
    2 warmup epochs, batch 32, a higher peak learning rate for training from
    scratch, an EMA horizon scaled to the shorter run, and a lower mixing
    probability and a lower firing rate for each physics augmentation (the
    temporal warp can move a sample across neighbouring cadence classes).
    Fusion dropout is off: the fused query attends to a single key, so
    dropping its attention weight removes the whole CVD message.
    """
    return ExperimentConfig(
        model=ModelConfig(num_classes=num_classes, seed=seed, fusion_dropout=0.0),
        train=TrainConfig(lr=2e-3, epochs=20, warmup_epochs=2, batch_size=32, ema_decay=0.98, seed=seed),
        preprocess=PreprocessConfig(spatial_size=32),
        augment=AugmentConfig(mix_prob=0.5, physics_prob=0.25),
    )
