"""Windows, slow-time DFT and cadence velocity diagram (CVD) extraction.

The CVD of a range-time map is obtained per antenna and per range bin:
the dB magnitude series is linearized (``10 ** (dB / 20)``), windowed,
zero-padded to ``n_fft`` and Fourier transformed along slow time.  The
magnitudes of the positive-frequency bins (DC excluded) are compressed back
to dB.  Linearizing first matters: the log of an amplitude-modulated
envelope ``A (1 + m cos(2 pi f0 t))`` carries a harmonic series at
``2 f0, 3 f0, ...`` that the linear envelope does not have.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, ValidationError
from .rtm import DEFAULT_FRAME_RATE, RangeTimeMap, db_to_linear, linear_to_db

BH4_COEFFS = (0.35875, 0.48829, 0.14128, 0.01168)
HAMMING_COEFFS = (0.54, 0.46)

CVD_MAGIC = b"CVD1"
_CVD_HEADER = struct.Struct("<4sIIIIffi")


class WindowKind(enum.Enum):
    BLACKMAN_HARRIS = "bh4"
    HAMMING = "hamming"
    RECTANGULAR = "rect"

    @classmethod
    def parse(cls, value) -> "WindowKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"unknown window {value!r}; choose from bh4, hamming, rect") from None


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CvdConfig:
    """Settings for :func:`extract_cvd`.

    ``zero_pad=False`` sets the DFT length to the sample's own frame count
    (the "no zero-padding" ablation); ``n_fft`` is then ignored.
    """

    n_fft: int = 128
    window: WindowKind = WindowKind.BLACKMAN_HARRIS
    discard_dc: bool = True
    eps: float = 1e-10
    linearize: bool = True
    zero_pad: bool = True

    def __post_init__(self):
        object.__setattr__(self, "window", WindowKind.parse(self.window))
        if self.zero_pad and not _is_pow2(self.n_fft):
            raise ValidationError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.eps <= 0:
            raise ValidationError("eps must be positive")

    def fft_length(self, frames: int) -> int:
        if not self.zero_pad:
            return frames
        if frames > self.n_fft:
            raise ValidationError(f"T={frames} exceeds n_fft={self.n_fft}")
        return self.n_fft


@dataclass(frozen=True)
class CadenceVelocityDiagram:
    """``data[antenna, range_bin, freq_bin]`` in dB.

    Column ``j`` holds DFT bin ``first_bin + j``, i.e. frequency
    ``(first_bin + j) * bin_hz``.
    """

    data: np.ndarray
    bin_hz: float
    frame_rate_hz: float = DEFAULT_FRAME_RATE
    label: Optional[int] = None
    first_bin: int = 1

    @property
    def antennas(self) -> int:
        return self.data.shape[0]

    @property
    def range_bins(self) -> int:
        return self.data.shape[1]

    @property
    def freq_bins(self) -> int:
        return self.data.shape[2]

    @property
    def frequencies(self) -> np.ndarray:
        return (self.first_bin + np.arange(self.freq_bins)) * self.bin_hz


def make_window(kind, length: int) -> np.ndarray:
    """Symmetric window of ``length`` samples (denominator ``length - 1``)."""
    kind = WindowKind.parse(kind)
    if length < 2:
        raise ValidationError(f"window length must be >= 2, got {length}")
    phase = 2.0 * np.pi * np.arange(length) / (length - 1)
    if kind is WindowKind.BLACKMAN_HARRIS:
        a0, a1, a2, a3 = BH4_COEFFS
        return a0 - a1 * np.cos(phase) + a2 * np.cos(2 * phase) - a3 * np.cos(3 * phase)
    if kind is WindowKind.HAMMING:
        a0, a1 = HAMMING_COEFFS
        return a0 - a1 * np.cos(phase)
    return np.ones(length)


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=int)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative Cooley-Tukey FFT along the last axis (length a power of two)."""
    x = np.asarray(x)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValidationError(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    a = x[..., _bit_reverse(n)].astype(complex)
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(*lead, n // size, size)
        even = a[..., :half]
        odd = a[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


def _dft_direct(x: np.ndarray, n_fft: int, n_bins: int) -> np.ndarray:
    n = x.shape[-1]
    basis = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n_bins)) / n_fft)
    return x @ basis


def real_dft_magnitude(signal, n_fft: int) -> np.ndarray:
    """``|sum_n x[n] exp(-2j pi k n / n_fft)|`` for ``k = 0 .. n_fft // 2``.

    Works on the last axis; shorter signals are implicitly zero-padded.
    Power-of-two lengths use the radix-2 FFT, others a direct DFT.
    """
    x = np.asarray(signal, dtype=float)
    n = x.shape[-1]
    if n > n_fft:
        raise ValidationError(f"signal length {n} exceeds n_fft={n_fft}")
    n_bins = n_fft // 2 + 1
    if _is_pow2(n_fft):
        pad = [(0, 0)] * (x.ndim - 1) + [(0, n_fft - n)]
        spectrum = fft_radix2(np.pad(x, pad))[..., :n_bins]
    else:
        spectrum = _dft_direct(x, n_fft, n_bins)
    return np.abs(spectrum)


def sidelobe_level_db(kind, length: int, oversample: int = 32) -> float:
    """Peak sidelobe of the zero-padded window spectrum relative to the mainlobe."""
    if length < 16:
        raise ValidationError("sidelobe measurement needs length >= 16")
    if oversample < 8:
        raise ValidationError("sidelobe measurement needs oversample >= 8")
    w = make_window(kind, length)
    n = 1 << int(np.ceil(np.log2(length * oversample)))
    mag = real_dft_magnitude(w, n)
    mag = mag / mag[0]
    k = 1
    while k < len(mag) - 1 and mag[k + 1] < mag[k]:
        k += 1
    return float(20.0 * np.log10(np.max(mag[k:])))


def cvd_spectrum(series: np.ndarray, cfg: CvdConfig) -> tuple[np.ndarray, int]:
    """Linear-magnitude cadence spectrum of slow-time series ``[..., T]`` (dB input).

    Returns the magnitudes and the DFT length used.
    """
    frames = series.shape[-1]
    n_fft = cfg.fft_length(frames)
    x = db_to_linear(series) if cfg.linearize else np.asarray(series, dtype=float)
    if cfg.discard_dc:
        x = x - x.mean(axis=-1, keepdims=True)
    x = x * make_window(cfg.window, frames)
    mag = real_dft_magnitude(x, n_fft)
    if cfg.discard_dc:
        mag = mag[..., 1:]
    return mag, n_fft


def extract_cvd(rtm: RangeTimeMap, cfg: CvdConfig = CvdConfig()) -> CadenceVelocityDiagram:
    """Cadence velocity diagram of every antenna and range bin.

    With ``discard_dc`` the temporal mean of each range bin is removed
    before windowing and the ``k = 0`` bin is dropped, so static returns
    (torso, clutter) do not leak into the low cadence bins.
    """
    series = np.swapaxes(rtm.data, 1, 2)  # [antennas, R, T]
    mag, n_fft = cvd_spectrum(series, cfg)
    return CadenceVelocityDiagram(
        data=linear_to_db(mag, cfg.eps),
        bin_hz=rtm.frame_rate_hz / n_fft,
        frame_rate_hz=rtm.frame_rate_hz,
        label=rtm.label,
        first_bin=1 if cfg.discard_dc else 0,
    )


def cvd_to_linear(cvd_db: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    return np.maximum(np.power(10.0, np.asarray(cvd_db) / 20.0) - eps, 0.0)


def dominant_cadence_bin(cvd: CadenceVelocityDiagram, range_bin: int, antenna: int = 0) -> int:
    """DFT bin index ``k`` of the strongest cadence at one range bin."""
    return cvd.first_bin + int(np.argmax(cvd.data[antenna, range_bin]))


def harmonic_artifact_ratio(m: float, f0_hz: float, frame_rate: float = DEFAULT_FRAME_RATE,
                            T: int = 39, linearize: bool = True, n_fft: int = 128,
                            window=WindowKind.BLACKMAN_HARRIS, amplitude: float = 1.0) -> float:
    """Second-harmonic to fundamental magnitude ratio of a modulated envelope.

    Synthesizes ``A (1 + m cos(2 pi f0 t))`` over ``T`` frames, stores it in
    dB, runs the CVD path and reads the spectrum at the bins nearest ``f0``
    and ``2 f0``.  Without linearization the ratio follows the log series,
    about ``m / 4`` for small ``m``; with it only leakage remains.
    """
    if not 0.0 < m < 1.0:
        raise ValidationError("modulation depth must satisfy 0 < m < 1")
    if f0_hz <= 0:
        raise ValidationError("f0 must be positive")
    if 2.0 * f0_hz >= frame_rate / 2.0:
        raise ValidationError(f"2*f0 = {2 * f0_hz} Hz is at or above Nyquist ({frame_rate / 2} Hz)")
    if T * f0_hz / frame_rate < 4.0:
        raise ValidationError("T must cover at least 4 cycles of f0")
    cfg = CvdConfig(n_fft=n_fft, window=window, linearize=linearize)
    t = np.arange(T) / frame_rate
    envelope = amplitude * (1.0 + m * np.cos(2.0 * np.pi * f0_hz * t))
    db = 20.0 * np.log10(envelope)
    rtm = RangeTimeMap(data=np.broadcast_to(db[None, :, None], (3, T, 1)).copy(),
                       frame_rate_hz=frame_rate)
    cvd = extract_cvd(rtm, cfg)
    spectrum = cvd_to_linear(cvd.data[0, 0], cfg.eps)
    k1 = int(round(f0_hz / cvd.bin_hz))
    k2 = int(round(2.0 * f0_hz / cvd.bin_hz))
    return float(spectrum[k2 - cvd.first_bin] / spectrum[k1 - cvd.first_bin])


def write_cvd(path, cvd: CadenceVelocityDiagram) -> None:
    label = -1 if cvd.label is None else int(cvd.label)
    a, r, k = cvd.data.shape
    header = _CVD_HEADER.pack(CVD_MAGIC, 1, a, r, k, float(cvd.frame_rate_hz), float(cvd.bin_hz), label)
    Path(path).write_bytes(header + np.ascontiguousarray(cvd.data, dtype="<f4").tobytes())


def read_cvd(path) -> CadenceVelocityDiagram:
    raw = Path(path).read_bytes()
    if len(raw) < _CVD_HEADER.size:
        raise FormatError(f"{path}: truncated CVD1 header")
    magic, version, a, r, k, frame_rate, bin_hz, label = _CVD_HEADER.unpack_from(raw)
    if magic != CVD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CVD_MAGIC!r}")
    if version != 1:
        raise FormatError(f"{path}: unsupported CVD1 version {version}")
    count = a * r * k
    if len(raw) != _CVD_HEADER.size + 4 * count:
        raise FormatError(f"{path}: payload length does not match header")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=_CVD_HEADER.size).reshape(a, r, k)
    # a spectrum that kept k = 0 has n_fft // 2 + 1 columns
    n_fft = int(round(frame_rate / bin_hz)) if bin_hz > 0 else 0
    first_bin = 0 if k == n_fft // 2 + 1 else 1
    return CadenceVelocityDiagram(data=data.astype(np.float32), bin_hz=float(bin_hz),
                                  frame_rate_hz=float(frame_rate),
                                  label=None if label < 0 else int(label), first_bin=first_bin)
