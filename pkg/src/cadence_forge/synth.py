"""Synthetic three-antenna range-time maps with known ground truth.

Each sample is a Gaussian range profile (the hand) whose amplitude is
modulated at a cadence frequency, optionally drifting in range, on top of
a broad static torso return.  The whole field is scaled per antenna to
mimic amplitude differentials across the receive array, then Gaussian
noise is added and the magnitude is stored in dB.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .rtm import DATASET_RANGE_BINS, DEFAULT_FRAME_RATE, RangeTimeMap

TORSO_CENTER = 140.0
TORSO_WIDTH = 30.0
AMPLITUDE_FLOOR = 1e-5

CADENCE_GRID = (1.2, 2.0, 2.8, 3.6)
RANGE_GRID = (60.0, 110.0, 170.0, 215.0)
GAIN_PATTERNS = ((1.0, 0.7, 0.5), (0.5, 1.0, 0.7), (0.7, 0.5, 1.0))
CADENCE_MODE_RANGE_STEP = 3.0
RANGE_MODE_CADENCE_BASE = 1.8
RANGE_MODE_CADENCE_STEP = 0.08


@dataclass
class GestureSpec:
    class_id: int
    cadence_hz: float
    mod_depth: float
    range_center: float
    range_width: float = 8.0
    range_drift: float = 0.0
    duration_frames: int = 30
    antenna_gains: tuple = (1.0, 1.0, 1.0)
    torso_amp_db: float = -6.0
    noise_db: float = -40.0

    def validate(self, frame_rate: float = DEFAULT_FRAME_RATE, range_bins: int = DATASET_RANGE_BINS) -> None:
        if not 0.0 < self.cadence_hz < frame_rate / 2:
            raise ValidationError(f"cadence {self.cadence_hz} Hz outside (0, {frame_rate / 2})")
        if not 0.0 <= self.mod_depth < 1.0:
            raise ValidationError("mod_depth must lie in [0, 1)")
        if self.range_width <= 0:
            raise ValidationError("range_width must be positive")
        end = self.range_center + self.range_drift * (self.duration_frames - 1)
        lo = min(self.range_center, end) - self.range_width
        hi = max(self.range_center, end) + self.range_width
        if lo < 0 or hi >= range_bins:
            raise ValidationError(f"range profile [{lo:.1f}, {hi:.1f}] leaves [0, {range_bins})")
        if self.duration_frames < 2:
            raise ValidationError("duration_frames must be >= 2")
        if len(self.antenna_gains) != 3 or min(self.antenna_gains) <= 0:
            raise ValidationError("antenna_gains needs three positive values")

    @property
    def cycles(self) -> float:
        return self.cadence_hz * self.duration_frames / DEFAULT_FRAME_RATE


@dataclass
class SynthDataset:
    samples: list
    specs: list
    seed: int
    splits: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples])

    def subset(self, split: str) -> list:
        return [s for s, tag in zip(self.samples, self.splits) if tag == split]


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one sample, independent of generation order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def linear_field(spec: GestureSpec, frame_rate: float = DEFAULT_FRAME_RATE,
                 range_bins: int = DATASET_RANGE_BINS) -> np.ndarray:
    """Noiseless linear amplitude ``[3, T, R]`` for ``spec``."""
    t = np.arange(spec.duration_frames)
    r = np.arange(range_bins)
    centers = spec.range_center + spec.range_drift * t
    profile = np.exp(-0.5 * ((r[None, :] - centers[:, None]) / spec.range_width) ** 2)
    envelope = 1.0 + spec.mod_depth * np.cos(2.0 * np.pi * spec.cadence_hz * t / frame_rate)
    hand = profile * envelope[:, None]
    torso = 10.0 ** (spec.torso_amp_db / 20.0) * np.exp(-0.5 * ((r - TORSO_CENTER) / TORSO_WIDTH) ** 2)
    base = hand + torso[None, :]
    gains = np.asarray(spec.antenna_gains, dtype=float)
    return gains[:, None, None] * base[None]


def generate_sample(spec: GestureSpec, frame_rate: float = DEFAULT_FRAME_RATE, seed: int = 0,
                    range_bins: int = DATASET_RANGE_BINS) -> RangeTimeMap:
    spec.validate(frame_rate, range_bins)
    amp = linear_field(spec, frame_rate, range_bins)
    if math.isfinite(spec.noise_db):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
        sigma = 10.0 ** (spec.noise_db / 20.0)
        amp = np.abs(amp + sigma * rng.standard_normal(amp.shape))
    amp = np.maximum(amp, AMPLITUDE_FLOOR)
    data = (20.0 * np.log10(amp)).astype(np.float32)
    return RangeTimeMap(data=data, frame_rate_hz=frame_rate, label=spec.class_id)


def class_prototypes(num_classes: int, mode: str = "mixed") -> list[dict]:
    """Deterministic per-class (cadence, range centre, antenna gains) grid.

    ``mixed`` walks cadence fastest, then range, then gain pattern, so some
    class pairs differ only in cadence and others only in range.
    ``cadence`` spaces classes widely in cadence and only a few bins apart
    in range; ``range`` does the opposite, with cadence steps below one
    CVD bin.  Gains are fixed in both.
    """
    if num_classes < 2:
        raise ValidationError("need at least two classes")
    protos = []
    if mode == "mixed":
        for c in range(num_classes):
            cad = CADENCE_GRID[c % len(CADENCE_GRID)]
            rng_idx = (c // len(CADENCE_GRID)) % len(RANGE_GRID)
            gain_idx = (c // (len(CADENCE_GRID) * len(RANGE_GRID))) % len(GAIN_PATTERNS)
            protos.append(dict(cadence_hz=cad, range_center=RANGE_GRID[rng_idx],
                               antenna_gains=GAIN_PATTERNS[gain_idx]))
    elif mode == "cadence":
        for c, cad in enumerate(np.linspace(1.0, 4.0, num_classes)):
            protos.append(dict(cadence_hz=float(cad), range_center=100.0 + CADENCE_MODE_RANGE_STEP * c,
                               antenna_gains=GAIN_PATTERNS[0]))
    elif mode == "range":
        for c, center in enumerate(np.linspace(40.0, 215.0, num_classes)):
            protos.append(dict(cadence_hz=RANGE_MODE_CADENCE_BASE + RANGE_MODE_CADENCE_STEP * c,
                               range_center=float(center), antenna_gains=GAIN_PATTERNS[0]))
    else:
        raise ValidationError(f"unknown dataset mode {mode!r}")
    return protos


def draw_spec(class_id: int, proto: dict, rng: np.random.Generator) -> GestureSpec:
    duration = int(rng.integers(20, 44))
    return GestureSpec(
        class_id=class_id,
        cadence_hz=proto["cadence_hz"] * float(rng.uniform(0.97, 1.03)),
        mod_depth=float(rng.uniform(0.3, 0.6)),
        range_center=proto["range_center"] + float(rng.uniform(-3.0, 3.0)),
        range_width=float(rng.uniform(7.0, 10.0)),
        range_drift=float(rng.uniform(-0.2, 0.2)),
        duration_frames=duration,
        antenna_gains=tuple(float(g) * float(rng.uniform(0.9, 1.1)) for g in proto["antenna_gains"]),
        torso_amp_db=float(rng.uniform(-9.0, -3.0)),
        noise_db=float(rng.uniform(-45.0, -35.0)),
    )


def stratified_split(labels: Sequence[int], val_fraction: float, seed: int) -> list[str]:
    """Per-class shuffled assignment of ``val_fraction`` of samples to ``"val"``."""
    labels = np.asarray(labels)
    tags = np.array(["train"] * len(labels), dtype=object)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0xC0FFEE])))
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        n_val = int(round(val_fraction * len(idx)))
        tags[idx[:n_val]] = "val"
    return tags.tolist()


def generate_dataset(num_classes: int, per_class: int, seed: int = 42, mode: str = "mixed",
                     frame_rate: float = DEFAULT_FRAME_RATE, val_fraction: float = 0.1) -> SynthDataset:
    protos = class_prototypes(num_classes, mode)
    samples, specs = [], []
    for c, proto in enumerate(protos):
        for j in range(per_class):
            index = c * per_class + j
            rng = sample_rng(seed, index)
            spec = draw_spec(c, proto, rng)
            noise_seed = int(rng.integers(0, 2**63 - 1))
            samples.append(generate_sample(spec, frame_rate, seed=noise_seed))
            specs.append(spec)
    labels = [s.label for s in samples]
    return SynthDataset(samples=samples, specs=specs, seed=seed,
                        splits=stratified_split(labels, val_fraction, seed))


def spec_to_dict(spec: GestureSpec) -> dict:
    d = asdict(spec)
    d["antenna_gains"] = list(d["antenna_gains"])
    return d


def spec_from_dict(d: dict) -> GestureSpec:
    d = dict(d)
    d["antenna_gains"] = tuple(d["antenna_gains"])
    return GestureSpec(**d)
