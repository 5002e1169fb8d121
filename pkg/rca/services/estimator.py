"""Quasi-maximum likelihood estimation of (phi, omega^2) over a compact rectangle.

The maximizer is found in two stages: the likelihood is evaluated on a regular
grid over the region, then projected Newton (analytic gradient and Hessian,
binding bounds held fixed, Armijo backtracking along the projected path) is run
from the best few grid nodes. The best endpoint wins.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from rca.exceptions import ConfigurationError, DegenerateDataError, NumericalError, UsageError

from .likelihood import LaggedSeries, LikelihoodPoint, gradient, hessian, loglik, loglik_grid
from .process import Trajectory

logger = logging.getLogger(__name__)

DEFAULT_Y = 1.0

# Armijo sufficient-increase constant and smallest step fraction tried
_ARMIJO_C = 1e-4
_MIN_STEP = 1e-12
# Curvature kept on the free block after shifting the Hessian
_MIN_CURVATURE = 1e-8


@dataclass(frozen=True)
class SearchRegion:
    """Gamma = [s_lo, s_hi] x [x_lo, x_hi] with 0 < x_lo."""

    s_lo: float
    s_hi: float
    x_lo: float
    x_hi: float

    def __post_init__(self):
        for name in ("s_lo", "s_hi", "x_lo", "x_hi"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite", field=name)
        if not self.s_lo < self.s_hi:
            raise ConfigurationError(f"s_lo must be below s_hi, got [{self.s_lo}, {self.s_hi}]", field="s_lo")
        if not 0 < self.x_lo < self.x_hi:
            raise ConfigurationError(f"need 0 < x_lo < x_hi, got [{self.x_lo}, {self.x_hi}]", field="x_lo")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.s_lo, self.x_lo])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.s_hi, self.x_hi])

    def contains(self, s: float, x: float) -> bool:
        return self.s_lo <= s <= self.s_hi and self.x_lo <= x <= self.x_hi

    def contains_region(self, other: SearchRegion) -> bool:
        return self.contains(other.s_lo, other.x_lo) and self.contains(other.s_hi, other.x_hi)

    def clip(self, z: np.ndarray) -> np.ndarray:
        return np.clip(z, self.lower, self.upper)

    def interior_with_margin(self, s: float, x: float, fraction: float = 0.05) -> bool:
        """True when (s, x) is at least ``fraction`` of each side length away from every edge."""
        ds = fraction * (self.s_hi - self.s_lo)
        dx = fraction * (self.x_hi - self.x_lo)
        return self.s_lo + ds <= s <= self.s_hi - ds and self.x_lo + dx <= x <= self.x_hi - dx

    def binding(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Coordinates sitting on a bound with the ascent direction pointing outward."""
        return ((z <= self.lower) & (g < 0)) | ((z >= self.upper) & (g > 0))

    def on_boundary(self, z: np.ndarray) -> bool:
        return bool(np.any(z <= self.lower) or np.any(z >= self.upper))

    def grid(self, points_s: int, points_x: int) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(self.s_lo, self.s_hi, points_s), np.linspace(self.x_lo, self.x_hi, points_x)


@dataclass(frozen=True)
class EstimatorConfig:
    grid_s: int = 64
    grid_x: int = 64
    newton_tol: float = 1e-10
    max_iters: int = 100
    refine_starts: int = 3

    def __post_init__(self):
        for name in ("grid_s", "grid_x"):
            if getattr(self, name) < 2:
                raise ConfigurationError(f"{name} must be at least 2", field=name)
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be positive", field="max_iters")
        if self.refine_starts < 1:
            raise ConfigurationError("refine_starts must be positive", field="refine_starts")
        if not 0 < self.newton_tol < 1:
            raise ConfigurationError(f"newton_tol must lie in (0, 1), got {self.newton_tol}", field="newton_tol")


@dataclass(frozen=True)
class EstimateResult:
    """QMLE eta_hat_n(y) = (eta1, eta2) and its audit trail.

    ``grad_norm`` is the sup-norm of the gradient of L_n / n at the estimate;
    ``grid_best_value`` is the largest likelihood seen on the evaluation grid.
    """

    eta1: float
    eta2: float
    y: float
    loglik_value: float
    grad_norm: float
    iterations: int
    on_boundary: bool
    grid_fallback_used: bool
    n: int
    grid_best_value: float
    eta2_at_lower_bound: bool = False


class PhiInterval(NamedTuple):
    lo: float
    hi: float
    undercover_warning: bool


class _Endpoint(NamedTuple):
    z: np.ndarray
    value: float
    iterations: int
    refined: bool


def _rounding_floor(value: float) -> float:
    return 1e-12 * (1.0 + abs(value))


def _point(z: np.ndarray, y: float) -> LikelihoodPoint:
    return LikelihoodPoint(float(z[0]), float(z[1]), y)


def _newton_direction(h: np.ndarray, g: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Ascent direction -H_f^{-1} g_f on the free block, with H_f shifted to negative definite."""
    direction = np.zeros(2)
    if not free.any():
        return direction
    hf = h[np.ix_(free, free)]
    top = float(np.linalg.eigvalsh(hf).max())
    scale = max(1.0, float(np.abs(hf).max()))
    floor = _MIN_CURVATURE * scale
    if top > -floor:
        hf = hf - (top + floor) * np.eye(hf.shape[0])
    direction[free] = -np.linalg.solve(hf, g[free])
    return direction


def _projected_newton(
    lag: LaggedSeries,
    region: SearchRegion,
    y: float,
    start: np.ndarray,
    cfg: EstimatorConfig,
) -> _Endpoint:
    z = region.clip(np.asarray(start, dtype=float))
    value = loglik(lag, _point(z, y))
    n = lag.n
    iterations = 0

    for iterations in range(1, cfg.max_iters + 1):
        u = _point(z, y)
        g = np.array(gradient(lag, u)) / n
        free = ~region.binding(z, g)
        if np.max(np.abs(np.where(free, g, 0.0))) <= cfg.newton_tol:
            break

        direction = _newton_direction(hessian(lag, u), g, free)
        floor = _rounding_floor(value)
        step = 1.0
        accepted = False
        while step >= _MIN_STEP:
            candidate = region.clip(z + step * direction)
            if np.array_equal(candidate, z):
                break
            cand_value = loglik(lag, _point(candidate, y))
            gain = n * float(g @ (candidate - z))
            if cand_value >= value + _ARMIJO_C * gain or (gain <= floor and cand_value >= value - floor):
                accepted = True
                break
            step *= 0.5

        if not accepted:
            logger.debug(f"Newton stalled at s={z[0]:.12g}, x={z[1]:.12g} after {iterations} iterations")
            break
        z, value = candidate, cand_value

    return _Endpoint(z, value, iterations, refined=True)


def _qmle_lagged(lag: LaggedSeries, region: SearchRegion, y: float, cfg: EstimatorConfig) -> EstimateResult:
    if not (y > 0 and math.isfinite(y)):
        raise ConfigurationError(f"y must be positive, got {y}", field="y")
    if lag.all_zero:
        raise DegenerateDataError("every X_{k-1} is zero; the likelihood is constant in (s, x)")

    s_grid, x_grid = region.grid(cfg.grid_s, cfg.grid_x)
    values = loglik_grid(lag, s_grid, x_grid, y)
    grid_best = float(values.max())

    # Descending value, ties to the lexicographically smallest (s, x)
    ss, xx = np.meshgrid(s_grid, x_grid, indexing="ij")
    order = np.lexsort((xx.ravel(), ss.ravel(), -values.ravel()))

    endpoints = []
    for flat in order[: cfg.refine_starts]:
        i, j = np.unravel_index(flat, values.shape)
        node = np.array([s_grid[i], x_grid[j]])
        try:
            endpoints.append(_projected_newton(lag, region, y, node, cfg))
        except NumericalError as e:
            logger.debug(f"Refinement from s={node[0]:.6g}, x={node[1]:.6g} failed: {e}")
            endpoints.append(_Endpoint(node, float(values[i, j]), 0, refined=False))

    best = min(endpoints, key=lambda ep: (-ep.value, float(ep.z[0]), float(ep.z[1])))
    fallback = not best.refined
    if best.value < grid_best - _rounding_floor(grid_best):
        i, j = np.unravel_index(order[0], values.shape)
        best = _Endpoint(np.array([s_grid[i], x_grid[j]]), grid_best, 0, refined=False)
        fallback = True
    if fallback:
        logger.warning("Newton refinement did not improve on the grid; returning the best grid node")

    g = np.array(gradient(lag, _point(best.z, y))) / lag.n
    lower_x = bool(best.z[1] <= region.x_lo)
    result = EstimateResult(
        eta1=float(best.z[0]),
        eta2=float(best.z[1]),
        y=y,
        loglik_value=float(best.value),
        grad_norm=float(np.max(np.abs(g))),
        iterations=best.iterations,
        on_boundary=region.on_boundary(best.z),
        grid_fallback_used=fallback,
        n=lag.n,
        grid_best_value=grid_best,
        eta2_at_lower_bound=lower_x,
    )
    logger.debug(
        f"QMLE n={lag.n} y={y}: eta=({result.eta1:.10g}, {result.eta2:.10g}) "
        f"iters={result.iterations} boundary={result.on_boundary}"
    )
    return result


def qmle(
    traj: Trajectory,
    region: SearchRegion,
    y: float = DEFAULT_Y,
    cfg: EstimatorConfig | None = None,
) -> EstimateResult:
    """Maximize L_n(s, x, y) over ``region``.

    The returned value is never below the best grid node, and an interior
    solution satisfies sup|grad L_n| / n <= cfg.newton_tol. Same inputs give
    the same result.

    Raises:
        UsageError: fewer than two transitions.
        DegenerateDataError: every lagged value is zero.
        NumericalError: non-finite likelihood.
    """
    if traj.n < 2:
        raise UsageError(f"qmle needs a trajectory with at least 3 values, got {traj.n + 1}")
    return _qmle_lagged(LaggedSeries.from_trajectory(traj), region, y, cfg or EstimatorConfig())


def profile_over_y(
    traj: Trajectory,
    region: SearchRegion,
    y_values: Sequence[float],
    cfg: EstimatorConfig | None = None,
) -> list[EstimateResult]:
    """One ``qmle`` result per y, in the order given; the lagged series is built once."""
    if not len(y_values):
        raise UsageError("y_values must not be empty")
    if traj.n < 2:
        raise UsageError(f"qmle needs a trajectory with at least 3 values, got {traj.n + 1}")
    lag = LaggedSeries.from_trajectory(traj)
    cfg = cfg or EstimatorConfig()
    return [_qmle_lagged(lag, region, float(y), cfg) for y in y_values]


def ci_phi(result: EstimateResult, n: int, level: float = 0.95) -> PhiInterval:
    """eta1 +/- z_{(1+level)/2} sqrt(eta2 / n).

    The quantile is ``scipy.stats.norm.ppf``. An estimate whose eta2 sits on
    the lower x bound gets ``undercover_warning`` set.
    """
    if not 0 <= level < 1:
        raise ConfigurationError(f"level must lie in [0, 1), got {level}", field="level")
    if n < 1:
        raise ConfigurationError("n must be positive", field="n")
    if not result.eta2 > 0:
        raise UsageError(f"eta2 must be positive, got {result.eta2}")

    z = float(stats.norm.ppf(0.5 * (1.0 + level)))
    half = z * math.sqrt(result.eta2 / n)
    if result.eta2_at_lower_bound:
        logger.warning(f"eta2={result.eta2:.6g} is on the lower x bound; the phi interval may undercover")
    return PhiInterval(result.eta1 - half, result.eta1 + half, result.eta2_at_lower_bound)
