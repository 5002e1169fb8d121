"""Simulation of X_k = (phi + b_k) X_{k-1} + e_k and the growth diagnostics of the path."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from rca.exceptions import (
    ConfigurationError,
    DegeneratePathError,
    OverflowDetected,
    UndefinedRateError,
    UsageError,
)

from .innovations import InnovationSpec, SeedStream, sample_pairs

logger = logging.getLogger(__name__)

# Above this |log X| the raw recursion is replaced by the scaled one
_LOG_RAW_LIMIT = 700.0


@dataclass(frozen=True)
class ModelParams:
    """phi and the constant starting value X_0 (default 1)."""

    phi: float
    x0: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.phi):
            raise ConfigurationError("phi must be finite", field="phi")
        if not math.isfinite(self.x0):
            raise ConfigurationError("x0 must be finite", field="x0")


def _frozen(values) -> np.ndarray | None:
    if values is None:
        return None
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Immutable path X_0..X_n.

    ``b``/``e`` hold the innovations when recorded. ``log_abs_x``/``sign_x`` are the
    log-space channel (log|X_k|, sign X_k); it stays finite after ``x`` overflows.
    """

    x: np.ndarray
    params: ModelParams
    spec: InnovationSpec | None = None
    seed_record: tuple[int, int] | None = None
    b: np.ndarray | None = None
    e: np.ndarray | None = None
    log_abs_x: np.ndarray | None = None
    sign_x: np.ndarray | None = None

    def __post_init__(self):
        for name in ("x", "b", "e", "log_abs_x", "sign_x"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.x.ndim != 1 or self.x.size < 1:
            raise UsageError("trajectory needs at least X_0")
        if (self.b is None) != (self.e is None):
            raise UsageError("b and e are recorded together")
        if self.b is not None and not (self.b.size == self.e.size == self.x.size - 1):
            raise UsageError("length(b) = length(e) = length(x) - 1 is required")
        if self.log_abs_x is not None and not (self.log_abs_x.size == self.sign_x.size == self.x.size):
            raise UsageError("log-space channel must match the path length")

    @property
    def n(self) -> int:
        return self.x.size - 1

    @property
    def has_innovations(self) -> bool:
        return self.b is not None

    @property
    def has_log_channel(self) -> bool:
        return self.log_abs_x is not None

    def head(self, m: int) -> Trajectory:
        """The first m steps (X_0..X_m) of this path."""
        if not 1 <= m <= self.n:
            raise UsageError(f"head length must be in [1, {self.n}], got {m}")
        return Trajectory(
            x=self.x[: m + 1],
            params=self.params,
            spec=self.spec,
            seed_record=self.seed_record,
            b=None if self.b is None else self.b[:m],
            e=None if self.e is None else self.e[:m],
            log_abs_x=None if self.log_abs_x is None else self.log_abs_x[: m + 1],
            sign_x=None if self.sign_x is None else self.sign_x[: m + 1],
        )

    def log_magnitudes(self) -> tuple[np.ndarray, np.ndarray]:
        """(log|X_k|, sign X_k), from the log channel when present."""
        if self.has_log_channel:
            return self.log_abs_x, self.sign_x
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.x)), np.sign(self.x)


def _log_step(log_abs: float, sign: float, coef: float, noise: float) -> tuple[float, float]:
    """One recursion step on (log|X|, sign X)."""
    if sign == 0.0:
        return (math.log(abs(noise)), math.copysign(1.0, noise)) if noise != 0.0 else (-math.inf, 0.0)
    if log_abs < _LOG_RAW_LIMIT:
        value = coef * sign * math.exp(log_abs) + noise
        if math.isfinite(value):
            return (math.log(abs(value)), math.copysign(1.0, value)) if value != 0.0 else (-math.inf, 0.0)
    scaled = coef * sign + noise * math.exp(-log_abs)
    if scaled == 0.0:
        return -math.inf, 0.0
    return log_abs + math.log(abs(scaled)), math.copysign(1.0, scaled)


def simulate(
    params: ModelParams,
    spec: InnovationSpec,
    n: int,
    stream: SeedStream,
    record_innovations: bool = False,
    log_space: bool = False,
) -> Trajectory:
    """Run the recursion from X_0 for n steps.

    Without ``log_space`` an overflow of X_k raises ``OverflowDetected`` with the
    first overflow index. With it, (log|X_k|, sign X_k) is carried alongside and the
    raw values are allowed to become infinite.
    """
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}", field="n")

    b, e = sample_pairs(spec, stream, n)
    phi = params.phi
    coefs = (phi + b).tolist()
    noises = e.tolist()

    x = [0.0] * (n + 1)
    x[0] = float(params.x0)
    for k in range(1, n + 1):
        x[k] = coefs[k - 1] * x[k - 1] + noises[k - 1]

    x_arr = np.array(x)
    finite = np.isfinite(x_arr)
    first = n + 1
    if not finite.all():
        first = int(np.argmin(finite))
        if not log_space:
            raise OverflowDetected(first)
        logger.debug(f"Raw path overflowed at k={first}; continuing on the log channel")

    log_abs_x = sign_x = None
    if log_space:
        # Exact from the raw values up to the overflow, scaled recursion after it
        with np.errstate(divide="ignore"):
            log_abs = np.log(np.abs(x_arr[:first])).tolist()
        signs = np.sign(x_arr[:first]).tolist()
        for k in range(first, n + 1):
            step = _log_step(log_abs[k - 1], signs[k - 1], coefs[k - 1], noises[k - 1])
            log_abs.append(step[0])
            signs.append(step[1])
        log_abs_x, sign_x = log_abs, signs

    return Trajectory(
        x=x_arr,
        params=params,
        spec=spec,
        seed_record=stream.record,
        b=b if record_innovations else None,
        e=e if record_innovations else None,
        log_abs_x=log_abs_x,
        sign_x=sign_x,
    )


class GrowthDiagnostics(NamedTuple):
    s_n: np.ndarray
    gamma_n: np.ndarray
    normalized: np.ndarray


def _coefficient_logs(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    if not traj.has_innovations:
        raise UsageError("growth diagnostics need a trajectory simulated with record_innovations=True")
    coefs = traj.params.phi + traj.b
    zero = np.flatnonzero(coefs == 0.0)
    if zero.size:
        raise DegeneratePathError(f"phi + b_k = 0 at k={int(zero[0]) + 1}")
    s_n = np.concatenate(([0.0], np.cumsum(np.log(np.abs(coefs)))))
    gamma_n = np.concatenate(([1.0], np.cumprod(np.sign(coefs))))
    return s_n, gamma_n


def growth_diagnostics(traj: Trajectory) -> GrowthDiagnostics:
    """S(i), gamma_i and e^{-S(i)} gamma_i X_i for i = 0..n, normalized in log space."""
    s_n, gamma_n = _coefficient_logs(traj)
    log_abs_x, sign_x = traj.log_magnitudes()
    with np.errstate(invalid="ignore"):
        normalized = gamma_n * sign_x * np.exp(log_abs_x - s_n)
    normalized = np.where(sign_x == 0.0, 0.0, normalized)
    return GrowthDiagnostics(s_n, gamma_n, normalized)


def y_partial_sums(traj: Trajectory, m: int) -> np.ndarray:
    """Y_1..Y_m with Y_j = sum_{i<=j} e^{-S(i)} gamma_i e_i."""
    if not 1 <= m <= traj.n:
        raise UsageError(f"m must be in [1, {traj.n}], got {m}")
    s_n, gamma_n = _coefficient_logs(traj)
    terms = np.exp(-s_n[1 : m + 1]) * gamma_n[1 : m + 1] * traj.e[:m]
    return np.cumsum(terms)


def nondegeneracy(traj: Trajectory) -> float:
    """|X_0 + Y_n|, the magnitude of the almost-sure limit of the normalized path."""
    return abs(traj.params.x0 + float(y_partial_sums(traj, traj.n)[-1]))


def empirical_growth_rate(traj: Trajectory) -> float:
    """log|X_n| / n."""
    log_abs_x, sign_x = traj.log_magnitudes()
    if sign_x[-1] == 0.0:
        raise UndefinedRateError("X_n = 0, growth rate undefined")
    return float(log_abs_x[-1]) / traj.n
