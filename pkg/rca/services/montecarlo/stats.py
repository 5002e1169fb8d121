"""Distribution tests used by the verdicts: Kolmogorov-Smirnov and Kendall's tau."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from rca.exceptions import NumericalError, UsageError


class KSResult(NamedTuple):
    d: float
    p: float


def _kolmogorov_p(d: float, effective_n: float) -> float:
    """Asymptotic p-value P(K > sqrt(n) D) from the Kolmogorov series."""
    return float(min(1.0, max(0.0, special.kolmogorov(math.sqrt(effective_n) * d))))


def _as_sample(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise UsageError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite values")
    return arr


def ks_one_sample(sample: Sequence[float], cdf: Callable) -> KSResult:
    """D = sup |F_emp - cdf| over both one-sided gaps at the sample points."""
    x = np.sort(_as_sample(sample, "sample"))
    n = x.size
    cdf_values = np.asarray(cdf(x), dtype=float)
    if cdf_values.shape != x.shape:
        cdf_values = np.vectorize(cdf, otypes=[float])(x)
    ranks = np.arange(1, n + 1)
    d_plus = float(np.max(ranks / n - cdf_values))
    d_minus = float(np.max(cdf_values - (ranks - 1) / n))
    d = max(d_plus, d_minus)
    return KSResult(d, _kolmogorov_p(d, n))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KSResult:
    """Two-sample D over the pooled points; p uses the effective size n_a n_b / (n_a + n_b)."""
    a = np.sort(_as_sample(a, "a"))
    b = np.sort(_as_sample(b, "b"))
    pooled = np.concatenate((a, b))
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    return KSResult(d, _kolmogorov_p(d, a.size * b.size / (a.size + b.size)))


def rank_correlation(a: Sequence[float], b: Sequence[float]) -> float:
    """Kendall's tau-b (``scipy.stats.kendalltau``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise UsageError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise UsageError("rank correlation needs at least 2 pairs")
    tau = stats.kendalltau(a, b).statistic
    if not math.isfinite(tau):
        raise NumericalError("Kendall's tau is undefined for a constant sample")
    return float(tau)
