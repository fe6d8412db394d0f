"""Turn range-time maps into the two model input images, with optional augmentation."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .. import augment as A
from ..rtm import RangeTimeMap, db_to_linear, linear_to_db, normalize_array, pad_time, resize_bilinear
from ..spectral import extract_cvd
from .config import ExperimentConfig


def _seeded(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def rtm_image(data_db: np.ndarray, exp: ExperimentConfig) -> np.ndarray:
    """Normalize, pad time to ``t_max`` and resize to ``3 x S x S``."""
    pp = exp.preprocess
    x = normalize_array(data_db)[0] if pp.normalize_to_unit else np.asarray(data_db, dtype=float)
    x = pad_time(x, pp.t_max)
    return resize_bilinear(x, pp.spatial_size, pp.spatial_size)


def cvd_image(rtm: RangeTimeMap, exp: ExperimentConfig) -> np.ndarray:
    """CVD from the raw dB map, normalized on its own and resized to ``3 x S x S``."""
    cvd = extract_cvd(rtm, exp.cvd).data
    x = normalize_array(cvd)[0] if exp.preprocess.normalize_to_unit else cvd
    s = exp.preprocess.spatial_size
    return resize_bilinear(x, s, s)


def model_inputs(rtm: RangeTimeMap, exp: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (evaluation) inputs for one sample as float32 arrays."""
    return (rtm_image(rtm.data, exp).astype(np.float32),
            cvd_image(rtm, exp).astype(np.float32))


def stack_inputs(samples, exp: ExperimentConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = [model_inputs(s, exp) for s in samples]
    labels = np.array([-1 if s.label is None else s.label for s in samples])
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs]), labels


def physics_augment(data_db: np.ndarray, cfg: A.AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Temporal warp in dB, then magnitude warp and multipath on linear amplitude.

    Each augmentation fires independently with ``cfg.physics_prob``; the
    input comes back unchanged (same dtype) when none fires.
    """
    out = np.asarray(data_db)
    if cfg.is_on("temporal_warp") and rng.random() < cfg.physics_prob and out.shape[1] >= 4:
        out = A.temporal_warp(out, cfg.temporal_warp_sigma, rng, cfg.temporal_warp_knots)
    do_mag = cfg.is_on("magnitude_warp") and rng.random() < cfg.physics_prob
    do_mp = cfg.is_on("multipath") and rng.random() < cfg.physics_prob and out.shape[2] > 1
    if do_mag or do_mp:
        lin = db_to_linear(out)
        if do_mag:
            lin = A.magnitude_warp(lin, cfg.mag_warp_sigma, cfg.mag_warp_knots, rng)
        if do_mp:
            max_delay = min(cfg.multipath_max_delay, out.shape[2] - 1)
            lin = A.random_multipath(lin, max_delay, cfg.multipath_atten, rng)
        out = linear_to_db(lin)
    return out


def augmented_inputs(rtm: RangeTimeMap, exp: ExperimentConfig, seed: int, epoch: int, index: int):
    """Training inputs for one sample; the stream is keyed by (seed, epoch, index)."""
    cfg = exp.augment
    rng = _seeded(seed, epoch, index)
    data = physics_augment(rtm.data, cfg, rng)
    aug = rtm.with_data(data)
    x_rtm = rtm_image(aug.data, exp)
    x_cvd = cvd_image(aug, exp)
    if cfg.is_on("antenna_dropout"):
        # same draw for both streams, so the same antenna disappears from each
        drop_seed = int(rng.integers(0, 2**63 - 1))
        x_rtm = A.antenna_dropout(x_rtm, cfg.antenna_dropout_p, drop_seed)
        x_cvd = A.antenna_dropout(x_cvd, cfg.antenna_dropout_p, drop_seed)
    if cfg.is_on("spec_augment"):
        for name in ("rtm", "cvd"):
            nf = int(rng.integers(0, cfg.spec_freq_masks + 1))
            nt = int(rng.integers(0, cfg.spec_time_masks + 1))
            x = x_rtm if name == "rtm" else x_cvd
            x = A.spec_augment(x, nf, nt, cfg.spec_max_frac, rng)
            if name == "rtm":
                x_rtm = x
            else:
                x_cvd = x
    return x_rtm.astype(np.float32), x_cvd.astype(np.float32)


def mix_batch(x_rtm: np.ndarray, x_cvd: np.ndarray, y: np.ndarray, cfg: A.AugmentConfig,
              rng: np.random.Generator, allowed: bool = True):
    """Batch-level MixUp or CutMix (mutually exclusive) applied to both streams alike.

    Returns the mixed arrays, soft targets and the event name
    (``"mixup"``, ``"cutmix"`` or ``"none"``).
    """
    mixup_on = cfg.is_on("mixup")
    cutmix_on = cfg.is_on("cutmix")
    if not allowed or not (mixup_on or cutmix_on) or len(y) < 2 or rng.random() >= cfg.mix_prob:
        return x_rtm, x_cvd, y, "none"
    if mixup_on and cutmix_on:
        use_mixup = rng.random() < cfg.mix_switch_prob
    else:
        use_mixup = mixup_on
    perm = rng.permutation(len(y))
    if use_mixup:
        lam = float(rng.beta(cfg.mixup_alpha, cfg.mixup_alpha))
        xr, yy = A.mixup(x_rtm, x_rtm[perm], y, y[perm], lam=lam)
        xc, _ = A.mixup(x_cvd, x_cvd[perm], y, y[perm], lam=lam)
        event = "mixup"
    else:
        lam = float(rng.beta(cfg.cutmix_alpha, cfg.cutmix_alpha))
        box = A.cutmix_box(x_rtm.shape[-2], x_rtm.shape[-1], lam, rng)
        xr, yy = A.cutmix(x_rtm, x_rtm[perm], y, y[perm], box=box)
        xc, _ = A.cutmix(x_cvd, x_cvd[perm], y, y[perm], box=box)
        event = "cutmix"
    return xr.astype(np.float32), xc.astype(np.float32), yy, event


def without_augmentation(exp: ExperimentConfig) -> ExperimentConfig:
    enabled = {name: False for name in A.AUGMENTATIONS}
    return replace(exp, augment=replace(exp.augment, enabled=enabled))
