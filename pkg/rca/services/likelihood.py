"""Gaussian quasi-log-likelihood of the RCA(1) path, its derivatives and their limits.

For u = (s, x, y) the per-observation term is

    l_k(u) = -1/2 * ( log(x X_{k-1}^2 + y) + (X_k - s X_{k-1})^2 / (x X_{k-1}^2 + y) )

and L_n(u) is the sum over k = 1..n. Every quantity below is assembled from the
bounded ratios X^2/(x X^2 + y), evaluated as 1/(x + y/X^2) once |X_{k-1}| > 1 so
that exploding paths never produce X^4-sized intermediates. Paths carrying a
log-space channel stay usable after the raw values overflow.

Conventions: ``gradient`` is the raw derivative of L_n (not divided by n);
``hessian`` is the derivative of L_n / n.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from rca.exceptions import ConfigurationError, NumericalError, UsageError

from .process import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LikelihoodPoint:
    """u = (s, x, y) with x > 0 and y > 0."""

    s: float
    x: float
    y: float

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ConfigurationError("s must be finite", field="s")
        if not (self.x > 0 and math.isfinite(self.x)):
            raise ConfigurationError(f"x must be positive, got {self.x}", field="x")
        if not (self.y > 0 and math.isfinite(self.y)):
            raise ConfigurationError(f"y must be positive, got {self.y}", field="y")


@dataclass(frozen=True, eq=False)
class LaggedSeries:
    """The pairs (X_{k-1}, X_k) split into a small-|X| and a large-|X| representation.

    Large entries keep q = X_k / X_{k-1}, 1/X_{k-1}^2 and log X_{k-1}^2; small entries
    keep the raw values. Unused slots hold zeros.
    """

    big: np.ndarray
    q: np.ndarray
    inv_sq: np.ndarray
    log_sq: np.ndarray
    prev: np.ndarray
    curr: np.ndarray

    @property
    def n(self) -> int:
        return self.big.size

    @property
    def all_zero(self) -> bool:
        """Every X_{k-1} vanishes, so L_n does not depend on (s, x)."""
        return not self.big.any() and not np.any(self.prev)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> LaggedSeries:
        if traj.n < 1:
            raise UsageError("the likelihood needs at least X_0 and X_1")
        prev_raw, curr_raw = traj.x[:-1], traj.x[1:]
        finite = np.isfinite(prev_raw) & np.isfinite(curr_raw)
        if not finite.all() and not traj.has_log_channel:
            first = int(np.argmin(finite))
            raise NumericalError(f"non-finite trajectory value near k={first}")

        big = ~np.isfinite(prev_raw) | (np.abs(prev_raw) > 1.0)
        with np.errstate(all="ignore"):
            q = curr_raw / prev_raw
            inv_sq = 1.0 / (prev_raw * prev_raw)
            log_sq = 2.0 * np.log(np.abs(prev_raw))

        if not finite.all():
            bad = ~finite
            log_abs, sign = traj.log_abs_x, traj.sign_x
            lag_log, cur_log = log_abs[:-1][bad], log_abs[1:][bad]
            q[bad] = sign[1:][bad] * sign[:-1][bad] * np.exp(cur_log - lag_log)
            inv_sq[bad] = np.exp(-2.0 * lag_log)
            log_sq[bad] = 2.0 * lag_log

        return cls(
            big=big,
            q=np.where(big, q, 0.0),
            inv_sq=np.where(big, inv_sq, 0.0),
            log_sq=np.where(big, log_sq, 0.0),
            prev=np.where(big, 0.0, prev_raw),
            curr=np.where(big, 0.0, curr_raw),
        )


class _Terms(NamedTuple):
    w: np.ndarray  # X^2 / (x X^2 + y)
    z: np.ndarray  # (X_k - s X_{k-1})^2 / (x X^2 + y)
    score_s: np.ndarray  # (X_k - s X_{k-1}) X_{k-1} / (x X^2 + y)
    log_core: np.ndarray  # log(x X^2 + y) minus log X^2 on large entries


def _terms(lag: LaggedSeries, s: float, x: float, y: float) -> _Terms:
    big = lag.big
    scaled = x + y * lag.inv_sq
    d = x * lag.prev * lag.prev + y

    resid_big = lag.q - s
    resid_small = lag.curr - s * lag.prev

    w = np.where(big, 1.0 / scaled, lag.prev * lag.prev / d)
    z = np.where(big, resid_big * resid_big / scaled, resid_small * resid_small / d)
    score_s = np.where(big, resid_big / scaled, resid_small * lag.prev / d)
    log_core = np.log(np.where(big, scaled, d))
    return _Terms(w, z, score_s, log_core)


def _as_lagged(traj: Trajectory | LaggedSeries) -> LaggedSeries:
    return traj if isinstance(traj, LaggedSeries) else LaggedSeries.from_trajectory(traj)


def _checked_sum(values: np.ndarray) -> float:
    total = math.fsum(values)
    if not math.isfinite(total):
        raise NumericalError("non-finite likelihood term")
    return total


def loglik(traj: Trajectory | LaggedSeries, u: LikelihoodPoint) -> float:
    """L_n(u), summed with exact rounding (``math.fsum``)."""
    lag = _as_lagged(traj)
    t = _terms(lag, u.s, u.x, u.y)
    return -0.5 * _checked_sum(lag.log_sq + t.log_core + t.z)


def loglik_diff_normalized(traj: Trajectory | LaggedSeries, u: LikelihoodPoint, theta: LikelihoodPoint) -> float:
    """(L_n(u) - L_n(theta)) / n from per-k differences.

    The log terms enter as log((x + y/X^2) / (omega^2 + sigma^2/X^2)) on large
    entries, so the diverging log X^2 parts cancel before summation.
    """
    lag = _as_lagged(traj)
    tu = _terms(lag, u.s, u.x, u.y)
    tt = _terms(lag, theta.s, theta.x, theta.y)
    per_k = -0.5 * ((tu.log_core - tt.log_core) + (tu.z - tt.z))
    return _checked_sum(per_k) / lag.n


def limit_f(s: float, x: float, phi: float, omega_sq: float) -> float:
    """f(s, x) = 1/2 { log(omega^2/x) + 1 - omega^2/x - (phi - s)^2/x }; maximal (= 0) at (phi, omega^2)."""
    if not x > 0:
        raise ConfigurationError(f"x must be positive, got {x}", field="x")
    if not omega_sq > 0:
        raise ConfigurationError(f"omega_sq must be positive, got {omega_sq}", field="omega_sq")
    ratio = omega_sq / x
    return 0.5 * (math.log(ratio) + 1.0 - ratio - (phi - s) ** 2 / x)


def gradient(traj: Trajectory | LaggedSeries, u: LikelihoodPoint) -> tuple[float, float]:
    """(dL_n/ds, dL_n/dx) at u, NOT divided by n."""
    lag = _as_lagged(traj)
    t = _terms(lag, u.s, u.x, u.y)
    g1 = _checked_sum(t.score_s)
    g2 = _checked_sum(-0.5 * t.w * (1.0 - t.z))
    return g1, g2


def hessian(traj: Trajectory | LaggedSeries, u: LikelihoodPoint) -> np.ndarray:
    """Second derivatives of L_n / n in (s, x): [[g11, g12], [g12, g22]]."""
    lag = _as_lagged(traj)
    t = _terms(lag, u.s, u.x, u.y)
    w_sq = t.w * t.w
    g11 = _checked_sum(-t.w) / lag.n
    g12 = _checked_sum(-t.score_s * t.w) / lag.n
    g22 = _checked_sum(0.5 * w_sq - t.z * w_sq) / lag.n
    return np.array([[g11, g12], [g12, g22]])


def hessian_limit(u: LikelihoodPoint, phi: float, omega_sq: float) -> np.ndarray:
    """Probability limit of ``hessian``; at u = (phi, omega^2, .) it is diag(-1/omega^2, -1/(2 omega^4))."""
    if not omega_sq > 0:
        raise ConfigurationError(f"omega_sq must be positive, got {omega_sq}", field="omega_sq")
    x = u.x
    gap = phi - u.s
    g11 = -1.0 / x
    g12 = -gap / x**2
    g22 = 1.0 / (2.0 * x**2) - (gap**2 + omega_sq) / x**3
    return np.array([[g11, g12], [g12, g22]])


def loglik_grid(
    traj: Trajectory | LaggedSeries,
    s_values: np.ndarray,
    x_values: np.ndarray,
    y: float,
) -> np.ndarray:
    """L_n on the lattice s_values x x_values at fixed y; shape (len(s), len(x)).

    For each x the residual sum is a quadratic in s, so a column costs one pass
    over the data.
    """
    if not y > 0:
        raise ConfigurationError(f"y must be positive, got {y}", field="y")
    lag = _as_lagged(traj)
    s_values = np.asarray(s_values, dtype=float)
    x_values = np.asarray(x_values, dtype=float)
    if np.any(x_values <= 0):
        raise ConfigurationError("x grid must be positive", field="x")

    out = np.empty((s_values.size, x_values.size))
    log_sq_total = float(lag.log_sq.sum())
    for j, x in enumerate(x_values):
        scaled = x + y * lag.inv_sq
        d = x * lag.prev * lag.prev + y
        w = np.where(lag.big, 1.0 / scaled, lag.prev * lag.prev / d)
        cross = np.where(lag.big, lag.q / scaled, lag.curr * lag.prev / d)
        square = np.where(lag.big, lag.q * lag.q / scaled, lag.curr * lag.curr / d)
        log_total = log_sq_total + float(np.log(np.where(lag.big, scaled, d)).sum())
        quad = square.sum() - 2.0 * s_values * cross.sum() + s_values * s_values * w.sum()
        out[:, j] = -0.5 * (log_total + quad)

    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite likelihood on the evaluation grid")
    return out


def score_remainder(traj: Trajectory, phi: float, omega_sq: float, y: float) -> tuple[float, float]:
    """n^{-1/2} (g_1 - sum b_k / omega^2) and n^{-1/2} (g_2 - sum (b_k^2 - omega^2) / (2 omega^4)).

    The gradient is taken at (phi, omega^2, y). Both remainders tend to zero in
    probability (the second one at y = sigma^2).
    """
    if not traj.has_innovations:
        raise UsageError("score remainders need recorded innovations")
    g1, g2 = gradient(traj, LikelihoodPoint(phi, omega_sq, y))
    b = traj.b
    root_n = math.sqrt(traj.n)
    lead1 = math.fsum(b) / omega_sq
    lead2 = math.fsum(b * b - omega_sq) / (2.0 * omega_sq**2)
    return (g1 - lead1) / root_n, (g2 - lead2) / root_n
