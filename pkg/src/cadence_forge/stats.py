"""Fold-comparison statistics and confusion-matrix utilities.

The corrected paired t-test inflates the standard error of the mean fold
difference by ``sqrt(1/k + rho)`` (``rho = n_test / n_train``) to account for
training sets that overlap across cross-validation folds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class FoldScores:
    method_a: np.ndarray
    method_b: np.ndarray
    rho: Optional[float] = None

    def __post_init__(self):
        a = np.asarray(self.method_a, dtype=float)
        b = np.asarray(self.method_b, dtype=float)
        if a.ndim != 1 or a.shape != b.shape:
            raise ValidationError(f"fold score vectors must be 1-D and equal length, got {a.shape} and {b.shape}")
        if a.size < 2:
            raise ValidationError("need at least two folds")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("fold scores must be finite")
        object.__setattr__(self, "method_a", a)
        object.__setattr__(self, "method_b", b)
        if self.rho is not None and self.rho < 0:
            raise ValidationError("rho must be non-negative")

    @property
    def k(self) -> int:
        return self.method_a.size

    @property
    def diffs(self) -> np.ndarray:
        return self.method_a - self.method_b

    @property
    def test_train_ratio(self) -> float:
        """``rho`` if given, else ``n_test / n_train = 1 / (k - 1)`` for k-fold CV."""
        return 1.0 / (self.k - 1) if self.rho is None else float(self.rho)


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    corrected_se: float
    mean_diff: float
    sd_diff: float

    def to_dict(self) -> dict:
        return {"t": self.t, "df": self.df, "p": self.p, "corrected_se": self.corrected_se,
                "mean_diff": self.mean_diff, "sd_diff": self.sd_diff}


# ---------------------------------------------------------------------------
# Student-t distribution via the regularized incomplete beta function

def _betacf(a: float, b: float, x: float, max_iter: int = 300, tol: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValidationError("betainc_reg needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValidationError("betainc_reg needs x in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # use the symmetry relation where the continued fraction converges fastest
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValidationError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t >= 0 else tail


def t_ppf(q: float, df: float) -> float:
    """Quantile of Student's t by bisection on :func:`t_cdf`."""
    if not 0.0 < q < 1.0:
        raise ValidationError("quantile must lie in (0, 1)")
    lo, hi = -1.0, 1.0
    while t_cdf(lo, df) > q:
        lo *= 2.0
    while t_cdf(hi, df) < q:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Paired comparisons

def corrected_paired_ttest(scores: FoldScores) -> TTestResult:
    """Paired t-test with the overlapping-training-set variance correction.

    ``rho = 0`` gives the classical paired t-test.  If every difference is
    zero the result is ``t = 0, p = 1``; if the differences are constant but
    non-zero, ``t`` is reported as a signed infinity with a warning.
    """
    d = scores.diffs
    k = scores.k
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    se = sd * math.sqrt(1.0 / k + scores.test_train_ratio)
    df = k - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, df, 1.0, 0.0, 0.0, 0.0)
        warnings.warn("fold differences have zero variance; t is infinite", RuntimeWarning, stacklevel=2)
        return TTestResult(math.copysign(math.inf, mean), df, 0.0, 0.0, mean, 0.0)
    t = mean / se
    return TTestResult(t, df, t_sf_two_sided(t, df), se, mean, sd)


def paired_ttest_from_summary(mean_diff: float, uncorrected_se: float, k: int,
                              rho: Optional[float] = None) -> TTestResult:
    """Same test from the mean difference and the plain standard error ``sd / sqrt(k)``."""
    if k < 2:
        raise ValidationError("need at least two folds")
    if uncorrected_se < 0:
        raise ValidationError("standard error must be non-negative")
    rho = 1.0 / (k - 1) if rho is None else rho
    sd = uncorrected_se * math.sqrt(k)
    if sd == 0.0:
        return TTestResult(0.0 if mean_diff == 0 else math.copysign(math.inf, mean_diff), k - 1,
                           1.0 if mean_diff == 0 else 0.0, 0.0, mean_diff, 0.0)
    se = sd * math.sqrt(1.0 / k + rho)
    t = mean_diff / se
    return TTestResult(t, k - 1, t_sf_two_sided(t, k - 1), se, mean_diff, sd)


def cohens_d(scores: FoldScores) -> float:
    """Mean paired difference over its standard deviation (signed infinity if sd = 0)."""
    d = scores.diffs
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0
        warnings.warn("fold differences have zero variance; Cohen's d is infinite", RuntimeWarning, stacklevel=2)
        return math.copysign(math.inf, mean)
    return mean / sd


# ---------------------------------------------------------------------------
# Confusion matrices

@dataclass(frozen=True)
class ConfusionReport:
    matrix: np.ndarray
    per_class_acc: np.ndarray
    top1: float

    @property
    def macro_acc(self) -> float:
        valid = self.per_class_acc[~np.isnan(self.per_class_acc)]
        return float(valid.mean()) if valid.size else float("nan")


def _check_labels(labels, num_classes: int, what: str) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValidationError(f"{what} must be 1-D")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValidationError(f"{what} must be integer class ids")
        arr = arr.astype(int)
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        raise ValidationError(f"{what} must lie in [0, {num_classes})")
    return arr.astype(int)


def confusion_matrix(preds, truths, num_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    if num_classes < 1:
        raise ValidationError("num_classes must be positive")
    p = _check_labels(preds, num_classes, "preds")
    t = _check_labels(truths, num_classes, "truths")
    if p.shape != t.shape:
        raise ValidationError("preds and truths differ in length")
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(m, (t, p), 1)
    return m


def confusion_and_perclass(preds, truths, num_classes: int) -> ConfusionReport:
    """Confusion matrix, per-class accuracy (NaN for classes with no samples) and top-1."""
    m = confusion_matrix(preds, truths, num_classes)
    rows = m.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, np.diag(m) / np.maximum(rows, 1), np.nan)
    n = int(m.sum())
    top1 = float(np.trace(m) / n) if n else float("nan")
    return ConfusionReport(m, per_class, top1)


def most_confused_submatrix(matrix, size: int) -> tuple[list, np.ndarray]:
    """Classes involved in the largest off-diagonal counts, and their induced submatrix.

    Off-diagonal cells are visited by count (descending; ties by row, then
    column); the true and predicted class of each are added in that order
    until ``size`` distinct classes are collected.  Remaining slots, if any,
    are filled by the lowest unused class indices with a warning.
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("confusion matrix must be square")
    C = m.shape[0]
    if not 1 <= size <= C:
        raise ValidationError(f"size must lie in [1, {C}]")
    rows, cols = np.nonzero(~np.eye(C, dtype=bool) & (m > 0))
    counts = m[rows, cols]
    order = np.lexsort((cols, rows, -counts))
    chosen: list = []
    for i in order:
        for c in (int(rows[i]), int(cols[i])):
            if c not in chosen and len(chosen) < size:
                chosen.append(c)
        if len(chosen) == size:
            break
    if len(chosen) < size:
        warnings.warn(f"only {len(chosen)} classes involved in errors; filling by class index",
                      RuntimeWarning, stacklevel=2)
        for c in range(C):
            if len(chosen) == size:
                break
            if c not in chosen:
                chosen.append(c)
    idx = np.array(chosen)
    return chosen, m[np.ix_(idx, idx)]


def top1_accuracy(preds: Sequence[int], truths: Sequence[int]) -> float:
    p, t = np.asarray(preds), np.asarray(truths)
    if p.shape != t.shape or p.size == 0:
        raise ValidationError("preds and truths must be non-empty and equal length")
    return float(np.mean(p == t))
