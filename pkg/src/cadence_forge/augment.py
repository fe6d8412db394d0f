"""Radar-specific and generic augmentations, deterministic under a seed.

All functions take arrays shaped ``[antennas, T, R]`` (or any ``[..., T, F]``
for the mask/mix helpers) and never modify their input in place.
Multipath works on linear amplitude; the caller converts from and back to dB.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ValidationError

AUGMENTATIONS = ("temporal_warp", "magnitude_warp", "multipath", "antenna_dropout",
                 "spec_augment", "mixup", "cutmix")


@dataclass
class AugmentConfig:
    temporal_warp_sigma: float = 0.15
    temporal_warp_knots: int = 4
    mag_warp_sigma: float = 0.1
    mag_warp_knots: int = 4
    multipath_max_delay: int = 10
    multipath_atten: tuple = (0.05, 0.15)
    antenna_dropout_p: float = 0.1
    spec_freq_masks: int = 2
    spec_time_masks: int = 2
    spec_max_frac: float = 0.15
    mixup_alpha: float = 0.4
    cutmix_alpha: float = 1.0
    mix_prob: float = 1.0
    mix_switch_prob: float = 0.5
    physics_prob: float = 0.5
    enabled: dict = field(default_factory=lambda: {name: True for name in AUGMENTATIONS})

    def __post_init__(self):
        self.multipath_atten = tuple(self.multipath_atten)
        for name in ("antenna_dropout_p", "mix_prob", "mix_switch_prob", "physics_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        for name in ("temporal_warp_sigma", "mag_warp_sigma", "mixup_alpha", "cutmix_alpha"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.spec_freq_masks > 2 or self.spec_time_masks > 2:
            raise ValidationError("at most two frequency and two time masks")
        lo, hi = self.multipath_atten
        if not 0.0 <= lo <= hi:
            raise ValidationError("multipath_atten must be an increasing pair")
        unknown = set(self.enabled) - set(AUGMENTATIONS)
        if unknown:
            raise ValidationError(f"unknown augmentations in 'enabled': {sorted(unknown)}")
        self.enabled = {name: bool(self.enabled.get(name, True)) for name in AUGMENTATIONS}

    def is_on(self, name: str) -> bool:
        return self.enabled[name]

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["multipath_atten"] = list(self.multipath_atten)
        return d


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _interp_time(x: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Sample ``x[..., t, :]`` at fractional ``positions`` by linear interpolation."""
    t = x.shape[-2]
    lo = np.clip(np.floor(positions).astype(int), 0, t - 1)
    hi = np.minimum(lo + 1, t - 1)
    frac = (positions - lo)[:, None]
    return x[..., lo, :] * (1.0 - frac) + x[..., hi, :] * frac


def warp_path(T: int, sigma: float, seed, knots: int = 4) -> np.ndarray:
    """Monotone map from output frame to fractional source frame."""
    rng = _rng(seed)
    ctrl = np.linspace(0.0, T - 1, knots)
    shifted = ctrl + rng.normal(0.0, sigma * T, size=knots)
    path = CubicSpline(ctrl, shifted, bc_type="natural")(np.arange(T))
    path = np.clip(path, 0.0, T - 1)
    return np.maximum.accumulate(path)


def temporal_warp(x: np.ndarray, sigma: float, seed, knots: int = 4) -> np.ndarray:
    """Cubic-spline time warp, resampled by linear interpolation along time."""
    x = np.asarray(x, dtype=float)
    T = x.shape[-2]
    if T < 4:
        raise ValidationError("temporal_warp needs T >= 4")
    return _interp_time(x, warp_path(T, sigma, seed, knots))


def magnitude_envelope(T: int, sigma: float, knots: int, seed) -> np.ndarray:
    """``exp(s(t))`` with ``s`` a natural cubic spline through Gaussian knot values."""
    if knots < 2:
        raise ValidationError("magnitude warp needs at least two knots")
    rng = _rng(seed)
    ctrl = np.linspace(0.0, T - 1, knots)
    values = rng.normal(0.0, sigma, size=knots)
    return np.exp(CubicSpline(ctrl, values, bc_type="natural")(np.arange(T)))


def magnitude_warp(x: np.ndarray, sigma: float, knots: int, seed) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    env = magnitude_envelope(x.shape[-2], sigma, knots, seed)
    return x * env[:, None]


def simulated_multipath(x: np.ndarray, delay: int, atten: float, seed=None) -> np.ndarray:
    """Add a copy of ``x`` delayed by ``delay`` range bins and scaled by ``atten``.

    ``seed`` is accepted for interface symmetry; the operation is deterministic.
    """
    x = np.asarray(x, dtype=float)
    R = x.shape[-1]
    if delay >= R:
        raise ValidationError(f"delay {delay} must be smaller than the range axis ({R})")
    if delay < 1:
        raise ValidationError("delay must be >= 1 bin")
    if atten < 0:
        raise ValidationError("attenuation must be non-negative")
    out = x.copy()
    out[..., delay:] += atten * x[..., :-delay]
    return out


def random_multipath(x: np.ndarray, max_delay: int, atten_range, seed) -> np.ndarray:
    rng = _rng(seed)
    delay = int(rng.integers(1, max_delay + 1))
    atten = float(rng.uniform(*atten_range))
    return simulated_multipath(x, delay, atten)


def antenna_dropout(x: np.ndarray, p: float, seed) -> np.ndarray:
    """With probability ``p`` zero one uniformly chosen antenna plane."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError("dropout probability must lie in [0, 1]")
    x = np.asarray(x)
    rng = _rng(seed)
    drop = rng.random() < p
    antenna = int(rng.integers(0, x.shape[0]))
    out = x.copy()
    if drop:
        out[antenna] = 0
    return out


def spec_augment(x: np.ndarray, freq_masks: int, time_masks: int, max_frac: float = 0.15,
                 seed=0) -> np.ndarray:
    """Zero ``freq_masks`` bands on the last axis and ``time_masks`` on the one before.

    Band widths are uniform integers in ``[0, max_frac * axis_length]``.
    """
    if freq_masks > 2 or time_masks > 2 or freq_masks < 0 or time_masks < 0:
        raise ValidationError("mask counts must lie in 0..2")
    if not 0.0 < max_frac <= 0.5:
        raise ValidationError("max_frac must lie in (0, 0.5]")
    out = np.array(x, copy=True)
    rng = _rng(seed)
    for axis, count in ((-1, freq_masks), (-2, time_masks)):
        n = out.shape[axis]
        for _ in range(count):
            width = int(rng.integers(0, int(max_frac * n) + 1))
            start = int(rng.integers(0, n - width + 1))
            index = [slice(None)] * out.ndim
            index[axis] = slice(start, start + width)
            out[tuple(index)] = 0
    return out


def _check_pair(x1, x2, y1, y2):
    x1, x2 = np.asarray(x1), np.asarray(x2)
    y1, y2 = np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
    if x1.shape != x2.shape or y1.shape != y2.shape:
        raise ValidationError(f"shape mismatch: {x1.shape}/{x2.shape}, {y1.shape}/{y2.shape}")
    return x1, x2, y1, y2


def mixup(x1, x2, y1, y2, alpha: float = 0.4, seed=0, lam: Optional[float] = None):
    x1, x2, y1, y2 = _check_pair(x1, x2, y1, y2)
    if lam is None:
        lam = float(_rng(seed).beta(alpha, alpha))
    return lam * x1 + (1.0 - lam) * x2, lam * y1 + (1.0 - lam) * y2


def cutmix_box(h: int, w: int, lam: float, rng: np.random.Generator) -> tuple[int, int, int, int]:
    """Rectangle covering roughly ``1 - lam`` of an ``h x w`` plane, clipped to it."""
    cut = np.sqrt(1.0 - lam)
    ch, cw = int(round(h * cut)), int(round(w * cut))
    cy, cx = int(rng.integers(0, h)), int(rng.integers(0, w))
    y0, y1 = np.clip([cy - ch // 2, cy - ch // 2 + ch], 0, h)
    x0, x1 = np.clip([cx - cw // 2, cx - cw // 2 + cw], 0, w)
    return int(y0), int(y1), int(x0), int(x1)


def paste_box(x1: np.ndarray, x2: np.ndarray, box) -> tuple[np.ndarray, float]:
    """Paste ``box`` of ``x2`` into a copy of ``x1``; return it and the pasted fraction."""
    y0, y1, x0, x1_ = box
    out = np.array(x1, dtype=float, copy=True)
    out[..., y0:y1, x0:x1_] = x2[..., y0:y1, x0:x1_]
    h, w = out.shape[-2:]
    return out, (y1 - y0) * (x1_ - x0) / float(h * w)


def cutmix(x1, x2, y1, y2, alpha: float = 1.0, seed=0, lam: Optional[float] = None, box=None):
    """Paste a patch of ``x2`` into ``x1``; labels mix by the pasted pixel fraction."""
    x1, x2, y1, y2 = _check_pair(x1, x2, y1, y2)
    if x1.ndim < 2 or min(x1.shape[-2:]) < 2:
        raise ValidationError("cutmix needs two spatial axes of size >= 2")
    rng = _rng(seed)
    if box is None:
        if lam is None:
            lam = float(rng.beta(alpha, alpha))
        box = cutmix_box(x1.shape[-2], x1.shape[-1], lam, rng)
    out, frac = paste_box(x1, x2, box)
    return out, (1.0 - frac) * y1 + frac * y2
