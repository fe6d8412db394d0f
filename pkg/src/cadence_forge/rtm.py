"""Range-time map container, dB conversions and shared preprocessing.

A range-time map (RTM) holds one gesture: three receive antennas, each a
slow-time x range-bin image of echo magnitude in amplitude dB
(``20 * log10(amplitude)``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, ValidationError

NUM_ANTENNAS = 3
DATASET_RANGE_BINS = 256
DATASET_MIN_FRAMES = 20
DATASET_MAX_FRAMES = 43
DEFAULT_FRAME_RATE = 13.0

RTM_MAGIC = b"RTM1"
_RTM_HEADER = struct.Struct("<4sIIIIfi")


@dataclass(frozen=True)
class RangeTimeMap:
    """One radar gesture sample, ``data[antenna, frame, range_bin]`` in dB."""

    data: np.ndarray
    frame_rate_hz: float = DEFAULT_FRAME_RATE
    label: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValidationError(f"RTM data must be 3-D (antennas, T, R), got shape {data.shape}")
        if data.shape[0] != NUM_ANTENNAS:
            raise ValidationError(f"RTM needs {NUM_ANTENNAS} antennas, got {data.shape[0]}")
        if data.shape[1] < 2 or data.shape[2] < 1:
            raise ValidationError(f"RTM needs T >= 2 and R >= 1, got T={data.shape[1]}, R={data.shape[2]}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("RTM data contains NaN or Inf")
        if self.frame_rate_hz <= 0:
            raise ValidationError("frame_rate_hz must be positive")
        if self.label is not None and self.label < 0:
            raise ValidationError("label must be non-negative")
        object.__setattr__(self, "data", data)

    @property
    def antennas(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def range_bins(self) -> int:
        return self.data.shape[2]

    def is_dataset_conformant(self) -> bool:
        return (self.range_bins == DATASET_RANGE_BINS
                and DATASET_MIN_FRAMES <= self.frames <= DATASET_MAX_FRAMES)

    def with_data(self, data: np.ndarray) -> "RangeTimeMap":
        return replace(self, data=data)


@dataclass(frozen=True)
class PreprocessConfig:
    t_max: int = 48
    spatial_size: int = 224
    normalize_to_unit: bool = True

    def __post_init__(self):
        if self.t_max < 2:
            raise ValidationError("t_max must be >= 2")
        if self.spatial_size < 1:
            raise ValidationError("spatial_size must be >= 1")


def db_to_linear(x) -> np.ndarray:
    """Invert amplitude dB: ``10 ** (x / 20)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("db_to_linear requires finite input")
    return np.power(10.0, x / 20.0)


def linear_to_db(x, eps: float = 1e-10) -> np.ndarray:
    """Amplitude dB with an additive floor: ``20 * log10(x + eps)``."""
    x = np.asarray(x, dtype=float)
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if np.any(np.isnan(x)):
        raise ValidationError("linear_to_db received NaN")
    if np.any(x < 0):
        raise ValidationError("linear_to_db requires non-negative amplitudes")
    return 20.0 * np.log10(x + eps)


def normalize_array(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Joint min-max scaling to [0, 1]; constant input gives zeros and ``True``."""
    lo = float(np.min(x))
    hi = float(np.max(x))
    if not hi > lo:
        return np.zeros_like(x, dtype=float), True
    out = (x - lo) / (hi - lo)
    # guard against 1 ulp overshoot from the division
    return np.clip(out, 0.0, 1.0), False


def normalize_unit(rtm: RangeTimeMap) -> tuple[RangeTimeMap, bool]:
    """Min-max normalize all antennas jointly.

    Scaling jointly keeps the inter-antenna amplitude differences intact.
    Returns the normalized map and a flag that is ``True`` for constant input
    (in which case the data is all zeros).
    """
    data, degenerate = normalize_array(rtm.data)
    return rtm.with_data(data), degenerate


def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic interpolation matrix using half-pixel centres."""
    m = np.zeros((n_out, n_in))
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of the last two axes; linear in ``x``."""
    x = np.asarray(x, dtype=float)
    mh = _bilinear_matrix(x.shape[-2], out_h)
    mw = _bilinear_matrix(x.shape[-1], out_w)
    return mh @ x @ mw.T


def pad_time(data: np.ndarray, t_max: int) -> np.ndarray:
    """Append zero frames so the slow-time axis has length ``t_max``."""
    t = data.shape[-2]
    if t > t_max:
        raise ValidationError(f"T={t} exceeds t_max={t_max}")
    pad = [(0, 0)] * data.ndim
    pad[-2] = (0, t_max - t)
    return np.pad(data, pad)


def pad_and_resize(rtm: RangeTimeMap, cfg: PreprocessConfig) -> np.ndarray:
    """Zero-pad time to ``cfg.t_max`` then resize to ``3 x S x S``."""
    padded = pad_time(rtm.data, cfg.t_max)
    return resize_bilinear(padded, cfg.spatial_size, cfg.spatial_size)


def write_rtm(path, rtm: RangeTimeMap) -> None:
    label = -1 if rtm.label is None else int(rtm.label)
    header = _RTM_HEADER.pack(RTM_MAGIC, 1, rtm.antennas, rtm.frames, rtm.range_bins,
                              float(rtm.frame_rate_hz), label)
    payload = np.ascontiguousarray(rtm.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_rtm(path) -> RangeTimeMap:
    raw = Path(path).read_bytes()
    if len(raw) < _RTM_HEADER.size:
        raise FormatError(f"{path}: truncated RTM1 header ({len(raw)} bytes)")
    magic, version, antennas, t, r, frame_rate, label = _RTM_HEADER.unpack_from(raw)
    if magic != RTM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {RTM_MAGIC!r}")
    if version != 1:
        raise FormatError(f"{path}: unsupported RTM1 version {version}")
    count = antennas * t * r
    expected = _RTM_HEADER.size + 4 * count
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)} (truncated or padded)")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=_RTM_HEADER.size)
    data = data.reshape(antennas, t, r).astype(np.float32)
    return RangeTimeMap(data=data, frame_rate_hz=float(frame_rate),
                        label=None if label < 0 else int(label))
