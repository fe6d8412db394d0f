"""CAST: cross-antenna attention, dual-stream encoders and gated cross-attention fusion."""

from .config import ExperimentConfig, ModelConfig, TrainConfig, desk_config, paper_config
from .loss import cast_loss, smooth_targets
from .model import CasaModule, CastModel, Encoder, FusionBlock
from .train import TrainedBundle, train

__all__ = [
    "ExperimentConfig", "ModelConfig", "TrainConfig", "desk_config", "paper_config", "cast_loss",
    "smooth_targets", "CasaModule", "CastModel", "Encoder", "FusionBlock", "TrainedBundle", "train",
]
