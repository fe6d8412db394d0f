"""Test-time augmentation and checkpoint ensembles."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import ValidationError
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..rtm import RangeTimeMap
from .config import ExperimentConfig
from .data import stack_inputs
from .model import CastModel
from .train import TrainedBundle, build_model, predict_proba

TTA_VIEWS = ("original", "time_reversed", "noise", "range_shift", "time_shift")
NOISE_FRAC = 0.01
RANGE_SHIFT = 3
TIME_SHIFT = 2
CHECKPOINT_SUFFIX = ".ckpt"


def shift_axis(data: np.ndarray, shift: int, axis: int, fill: float) -> np.ndarray:
    """Shift towards higher indices along ``axis``, filling vacated cells with ``fill`` (no wraparound)."""
    out = np.full_like(data, fill)
    n = data.shape[axis]
    if shift >= n:
        return out
    src = [slice(None)] * data.ndim
    dst = [slice(None)] * data.ndim
    src[axis] = slice(0, n - shift)
    dst[axis] = slice(shift, n)
    out[tuple(dst)] = data[tuple(src)]
    return out


def tta_view(rtm: RangeTimeMap, view: str, seed: int = 0) -> RangeTimeMap:
    """One deterministic test-time view of a dB range-time map.

    Noise has standard deviation 1% of the sample's dB span; shifted-in
    cells take the sample minimum (the closest dB value to no echo).
    """
    x = rtm.data
    floor = float(x.min())
    if view == "original":
        out = x
    elif view == "time_reversed":
        out = x[:, ::-1, :]
    elif view == "noise":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x77A])))
        sigma = NOISE_FRAC * float(x.max() - x.min())
        out = x + sigma * rng.standard_normal(x.shape)
    elif view == "range_shift":
        out = shift_axis(x, RANGE_SHIFT, axis=2, fill=floor)
    elif view == "time_shift":
        out = shift_axis(x, TIME_SHIFT, axis=1, fill=floor)
    else:
        raise ValidationError(f"unknown TTA view '{view}'; choose from {TTA_VIEWS}")
    return rtm.with_data(np.ascontiguousarray(out, dtype=x.dtype))


def tta_views(rtm: RangeTimeMap, seed: int = 0, views: Sequence[str] = TTA_VIEWS) -> list:
    return [tta_view(rtm, v, seed) for v in views]


def _running_mean(arrays):
    mean, n = None, 0
    for a in arrays:
        n += 1
        mean = np.array(a, dtype=np.float64) if mean is None else mean + (a - mean) / n
    return mean


def predict_tta_batch(models: Sequence[CastModel], samples: Sequence[RangeTimeMap], exp: ExperimentConfig,
                      views: Sequence[str] = TTA_VIEWS, seed: int = 0) -> np.ndarray:
    """Softmax probabilities ``[N, C]`` averaged over views, then over models, with equal weights.

    Every model sees the same views, so this equals a flat average over
    all (model, view) pairs.
    """
    if not models:
        raise ValidationError("ensemble is empty")
    if not samples:
        raise ValidationError("no samples to predict")
    view_inputs = []
    for v in views:
        shifted = [tta_view(s, v, seed + i) for i, s in enumerate(samples)]
        xr, xc, _ = stack_inputs(shifted, exp)
        view_inputs.append((xr, xc))
    per_model = (_running_mean(predict_proba(m, xr, xc) for xr, xc in view_inputs) for m in models)
    return _running_mean(per_model)


def predict_tta(models, sample: RangeTimeMap, exp: ExperimentConfig, views: Sequence[str] = TTA_VIEWS,
                seed: int = 0) -> np.ndarray:
    """TTA probabilities ``[C]`` for one sample; ``models`` is a model or a list of models."""
    if isinstance(models, CastModel):
        models = [models]
    return predict_tta_batch(models, [sample], exp, views, seed)[0]


def save_bundle(bundle: TrainedBundle, directory) -> list:
    """Write final, EMA, SWA and top-k checkpoints; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"config": bundle.config.to_dict()}
    paths = []
    named = {"final": bundle.final, **bundle.members()}
    for i, (acc, epoch, _) in enumerate(bundle.top_k):
        meta_i = dict(meta, val_acc=acc, epoch=epoch)
        path = directory / f"top{i + 1}{CHECKPOINT_SUFFIX}"
        save_checkpoint(path, named[f"top{i + 1}"], meta_i)
        paths.append(path)
    for name in ("final", "ema", "swa"):
        if named.get(name) is not None:
            path = directory / f"{name}{CHECKPOINT_SUFFIX}"
            save_checkpoint(path, named[name], meta)
            paths.append(path)
    return paths


def load_model(path) -> tuple[CastModel, ExperimentConfig]:
    state, meta = load_checkpoint(path)
    if "config" not in meta:
        raise ValidationError(f"{path}: checkpoint has no embedded config")
    exp = ExperimentConfig.from_dict(meta["config"])
    return build_model(exp, state), exp


def load_ensemble(directory, members: Optional[Sequence[str]] = None) -> tuple[list, ExperimentConfig, list]:
    """Load ensemble members from a checkpoint directory.

    By default every checkpoint except ``final`` is used (top-k, EMA, SWA).
    Returns ``(models, config, names)``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"checkpoint directory {directory} does not exist")
    if members is None:
        paths = sorted(p for p in directory.glob(f"*{CHECKPOINT_SUFFIX}") if p.stem != "final")
        if not paths:
            paths = sorted(directory.glob(f"*{CHECKPOINT_SUFFIX}"))
    else:
        paths = [directory / f"{m}{CHECKPOINT_SUFFIX}" for m in members]
        missing = [str(p) for p in paths if not p.is_file()]
        if missing:
            raise ValidationError(f"missing checkpoint files: {missing}")
    if not paths:
        raise ValidationError(f"no checkpoints in {directory}")
    models, exp = [], None
    for p in paths:
        model, cfg = load_model(p)
        if exp is not None and cfg.model != exp.model:
            raise ValidationError(f"{p}: model configuration differs from the other members")
        models.append(model)
        exp = cfg
    return models, exp, [p.stem for p in paths]
