"""Experiment configuration for the Monte Carlo engine."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from rca.exceptions import ConfigurationError

from ..estimator import EstimatorConfig, SearchRegion
from ..innovations import DEFAULT_REFERENCE_M, BVariant, InnovationSpec, lyapunov_exponent, moment_summary
from ..process import ModelParams

logger = logging.getLogger(__name__)

INTERIOR_MARGIN = 0.05


class ExperimentKind(StrEnum):
    NORMAL_LIMIT = "normal_limit"
    STABLE_LIMIT = "stable_limit"
    CONSISTENCY = "consistency"
    Y_PROFILE = "y_profile"
    GROWTH = "growth"
    LIKELIHOOD_SURFACE = "likelihood_surface"


def _axis(lo: float, hi: float, points: int) -> np.ndarray:
    return np.linspace(lo, hi, points)


def _check_axis(prefix: str, lo: float, hi: float, points: int, positive: bool):
    if points < 1:
        raise ConfigurationError(f"{prefix}_points must be positive", field=f"{prefix}_points")
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi or (points > 1 and lo == hi):
        raise ConfigurationError(f"invalid {prefix} range [{lo}, {hi}]", field=f"{prefix}_lo")
    if positive and lo <= 0:
        raise ConfigurationError(f"{prefix}_lo must be positive, got {lo}", field=f"{prefix}_lo")


@dataclass(frozen=True)
class SurfaceLattice:
    """(s, x, y) nodes for the likelihood-surface scan."""

    s_lo: float
    s_hi: float
    s_points: int
    x_lo: float
    x_hi: float
    x_points: int
    y_lo: float = 0.5
    y_hi: float = 2.0
    y_points: int = 3

    def __post_init__(self):
        _check_axis("s", self.s_lo, self.s_hi, self.s_points, positive=False)
        _check_axis("x", self.x_lo, self.x_hi, self.x_points, positive=True)
        _check_axis("y", self.y_lo, self.y_hi, self.y_points, positive=True)

    @classmethod
    def over(cls, region: SearchRegion, points: int = 9) -> SurfaceLattice:
        return cls(region.s_lo, region.s_hi, points, region.x_lo, region.x_hi, points)

    @property
    def s_values(self) -> np.ndarray:
        return _axis(self.s_lo, self.s_hi, self.s_points)

    @property
    def x_values(self) -> np.ndarray:
        return _axis(self.x_lo, self.x_hi, self.x_points)

    @property
    def y_values(self) -> np.ndarray:
        return _axis(self.y_lo, self.y_hi, self.y_points)


@dataclass(frozen=True)
class ProfileGrids:
    """y and x grids for the sigma^2 flatness / omega^2 identification contrast."""

    y_lo: float = 0.25
    y_hi: float = 4.0
    y_points: int = 9
    x_lo: float = 0.25
    x_hi: float = 4.0
    x_points: int = 9

    def __post_init__(self):
        _check_axis("y", self.y_lo, self.y_hi, self.y_points, positive=True)
        _check_axis("x", self.x_lo, self.x_hi, self.x_points, positive=True)

    @property
    def y_values(self) -> np.ndarray:
        return _axis(self.y_lo, self.y_hi, self.y_points)

    @property
    def x_values(self) -> np.ndarray:
        return _axis(self.x_lo, self.x_hi, self.x_points)


@dataclass(frozen=True)
class VerdictThresholds:
    """Pass/fail bounds for the acceptance checks.

    Sized for the default replication counts; loosen them for small runs.
    """

    ks_p_min: float = 0.01
    mean_tol: float = 0.1
    cov_tol: float = 0.15
    tau_max: float = 0.05
    coverage_lo: float = 0.92
    coverage_hi: float = 0.975
    consistency_tol: float = 0.15
    consistency_rate: float = 0.95
    gap_max: float = 0.05
    rate_tol: float = 0.05
    flat_max: float = 0.02
    contrast_min: float = 0.2
    cauchy_max: float = 1e-3
    divergence_rate: float = 0.95
    y_spread_max: float = 0.5

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ConfigurationError(f"{name} must be a nonnegative number, got {value}", field=name)
        if self.coverage_lo > self.coverage_hi:
            raise ConfigurationError("coverage_lo must not exceed coverage_hi", field="coverage_lo")


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment.

    Validation at construction: reps >= 1, n >= 10, (phi, omega^2) at least 5%
    of each side inside the region (growth runs excepted), and the Lyapunov
    gate E log|phi + b| >= 0, strictly positive for growth runs or whenever
    some y differs from sigma^2. Errors name the config key at fault.
    """

    kind: ExperimentKind
    params: ModelParams
    spec: InnovationSpec
    n: int
    reps: int
    region: SearchRegion
    y_values: tuple[float, ...] = (1.0,)
    estimator_cfg: EstimatorConfig = field(default_factory=EstimatorConfig)
    master_seed: int = 0
    max_failed_fraction: float = 0.05
    log_space: bool = True
    ci_level: float = 0.95
    reference_m: int = DEFAULT_REFERENCE_M
    reference_reps: int = 2000
    surface: SurfaceLattice | None = None
    profile: ProfileGrids = field(default_factory=ProfileGrids)
    verdict: VerdictThresholds = field(default_factory=VerdictThresholds)
    lyapunov: float = field(default=math.nan, init=False, compare=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ExperimentKind(self.kind))
        except ValueError:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}", field="experiment.kind")
        object.__setattr__(self, "y_values", tuple(float(y) for y in self.y_values))
        if self.surface is None:
            object.__setattr__(self, "surface", SurfaceLattice.over(self.region))

        if self.reps < 1:
            raise ConfigurationError(f"reps must be at least 1, got {self.reps}", field="experiment.reps")
        if self.n < 10:
            raise ConfigurationError(f"n must be at least 10, got {self.n}", field="experiment.n")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer", field="experiment.seed")
        if not self.y_values or any(not (y > 0 and math.isfinite(y)) for y in self.y_values):
            raise ConfigurationError(
                "y_values must be a nonempty list of positive numbers", field="experiment.y_values"
            )
        if not 0 <= self.max_failed_fraction <= 1:
            raise ConfigurationError("max_failed_fraction must lie in [0, 1]", field="experiment.max_failed_fraction")
        if not 0 < self.ci_level < 1:
            raise ConfigurationError(f"ci level must lie in (0, 1), got {self.ci_level}", field="ci.level")
        if self.reference_m < 1 or self.reference_reps < 1:
            raise ConfigurationError("stable reference sizes must be positive", field="stable.reference_m")
        self._check_kind()
        self._check_region()
        self._check_lyapunov()

    @property
    def truth(self) -> tuple[float, float]:
        return self.params.phi, self.spec.omega_sq

    @property
    def sigma_sq(self) -> float:
        return moment_summary(self.spec).sigma_sq

    def _check_kind(self):
        if self.kind is ExperimentKind.STABLE_LIMIT and not self.spec.is_heavy_tailed:
            raise ConfigurationError("stable_limit experiments need innov.variant = ParetoTailB", field="innov.variant")
        if self.kind is ExperimentKind.NORMAL_LIMIT and self.spec.variant is not BVariant.GAUSSIAN:
            raise ConfigurationError(
                "normal_limit experiments need a finite-variance b law (GaussianBGaussianE)", field="innov.variant"
            )
        if self.kind is ExperimentKind.GROWTH and not self.log_space:
            raise ConfigurationError("growth experiments run on the log-space channel", field="experiment.log_space")

    def _check_region(self):
        if self.kind is ExperimentKind.GROWTH:
            return
        phi, omega_sq = self.truth
        if self.spec.variant is BVariant.POINT_MASS:
            omega_sq = self.spec.b_point**2
        if not self.region.interior_with_margin(phi, omega_sq, INTERIOR_MARGIN):
            raise ConfigurationError(
                f"truth ({phi}, {omega_sq}) must lie inside the region with a {INTERIOR_MARGIN:.0%} margin",
                field="region.s_lo",
            )

    def _check_lyapunov(self):
        value = lyapunov_exponent(self.spec, self.params.phi)
        object.__setattr__(self, "lyapunov", value)
        strict = self.kind is ExperimentKind.GROWTH or any(y != self.sigma_sq for y in self.y_values)
        if value < 0 or (strict and value <= 0):
            bound = "> 0" if strict else ">= 0"
            raise ConfigurationError(
                f"E log|phi + b| = {value:.6g} but {bound} is required (stationary regime is out of scope)",
                field="model.phi",
            )
        logger.debug(f"Lyapunov gate passed for {self.kind}: E log|phi + b| = {value:.6g}")
