"""Ablation registry: each variant changes exactly one aspect of a base configuration.

The two encoders differ only in kernel size (3 for RTM, 5 for CVD), so the
backbone rows swap or share kernel sizes; the labels keep the table's
backbone names for the row they stand in for.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, NamedTuple

from ..errors import ValidationError
from ..spectral import WindowKind
from .config import ExperimentConfig


class Variant(NamedTuple):
    name: str
    label: str
    apply: Callable[[ExperimentConfig], ExperimentConfig]


def _model(**kw):
    return lambda e: replace(e, model=replace(e.model, **kw))


def _train(**kw):
    return lambda e: replace(e, train=replace(e.train, **kw))


def _cvd(**kw):
    return lambda e: replace(e, cvd=replace(e.cvd, **kw))


def _disable(*names):
    def apply(e: ExperimentConfig) -> ExperimentConfig:
        enabled = dict(e.augment.enabled)
        enabled.update({n: False for n in names})
        return replace(e, augment=replace(e.augment, enabled=enabled))
    return apply


_VARIANTS = [
    Variant("full", "Full CAST", lambda e: e),
    Variant("no_linearize", "No linearisation (FFT on dB directly)", _cvd(linearize=False)),
    Variant("hamming", "Hamming window instead of Blackman-Harris", _cvd(window=WindowKind.HAMMING)),
    Variant("no_zero_pad", "No zero-padding (N_FFT=T)", _cvd(zero_pad=False)),
    Variant("no_casa", "Remove CASA (standard 3-channel stacking)", _model(use_casa=False)),
    Variant("casa_1head", "CASA with 1 head instead of 4 heads", _model(casa_heads=1)),
    Variant("concat_fusion", "Concatenation instead of cross-attention", _model(fusion="concat")),
    Variant("symmetric_fusion", "Symmetric cross-attention (both as Q)", _model(fusion="symmetric")),
    Variant("rtm_only", "RTM-only (no CVD stream)", _model(streams="rtm")),
    Variant("cvd_only", "CVD-only (no RTM stream)", _model(streams="cvd")),
    Variant("no_aux", "No auxiliary losses (lambda_aux=0)", _train(lambda_aux=0.0)),
    Variant("no_physics_aug", "No physics-aware augmentation",
            _disable("temporal_warp", "magnitude_warp", "multipath", "antenna_dropout")),
    Variant("no_swa_ema", "No SWA or EMA", _train(use_swa_ema=False)),
    Variant("no_mix", "MixUp/CutMix disabled", _disable("mixup", "cutmix")),
    Variant("swap_backbones", "Swap backbones (ConvNeXt-Tiny for RTM, EfficientNetV2-S for CVD)",
            lambda e: replace(e, model=replace(e.model, rtm_kernel=e.model.cvd_kernel, cvd_kernel=e.model.rtm_kernel))),
    Variant("shared_backbone", "Same model both streams (EfficientNetV2-S)",
            lambda e: replace(e, model=replace(e.model, cvd_kernel=e.model.rtm_kernel))),
]

VARIANTS = {v.name: v for v in _VARIANTS}


def variant_names() -> list[str]:
    return [v.name for v in _VARIANTS]


def apply_variant(name: str, base: ExperimentConfig) -> ExperimentConfig:
    try:
        variant = VARIANTS[name]
    except KeyError:
        raise ValidationError(f"unknown variant '{name}'; choose from {variant_names()}") from None
    return variant.apply(base)


def ablation_variants(base: ExperimentConfig) -> dict:
    """``{name: (label, config)}`` for every registered variant, in table order."""
    return {v.name: (v.label, v.apply(base)) for v in _VARIANTS}
