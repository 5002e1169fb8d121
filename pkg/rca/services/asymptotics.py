"""Closed-form limit covariances of the QMLE and the standardized statistics built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rca.exceptions import DomainError, NumericalError

from .estimator import EstimateResult
from .innovations import BVariant, InnovationSpec, moment_summary, tail_norming

# Smallest eigenvalue, relative to the largest, accepted when whitening
_SINGULAR_RTOL = 1e-14


@dataclass(frozen=True, eq=False)
class LimitCovariances:
    """Omega_0 (estimator), Omega_* (score) and Omega_** (Hessian) for one innovation law."""

    omega0: np.ndarray
    omega_star: np.ndarray
    omega_dstar: np.ndarray


def limit_covariances(spec: InnovationSpec) -> LimitCovariances:
    """Build the three matrices from the law's moments.

    Omega_0 = [[w, w E b^3], [w E b^3, var b^2]] with w = omega^2,
    Omega_* = [[1/w, E b^3/(2 w^2)], [E b^3/(2 w^2), var b^2/(4 w^4)]] and
    Omega_** = diag(-1/w, -1/(2 w^2)).

    Raises:
        DomainError: var b^2 is infinite (use the stable pipeline), or b is
            degenerate (point mass) so there is no normal limit.
    """
    if spec.variant is BVariant.POINT_MASS:
        raise DomainError("a point-mass coefficient has no normal limit for the QMLE", field="variant")
    moments = moment_summary(spec)
    if not math.isfinite(moments.var_b2):
        raise DomainError(
            f"var(b^2) is infinite for {spec.variant}; standardize with the stable limit instead",
            field="variant",
        )

    w, eb3, var_b2 = moments.omega_sq, moments.eb3, moments.var_b2
    omega0 = np.array([[w, w * eb3], [w * eb3, var_b2]])
    omega_star = np.array(
        [
            [1.0 / w, eb3 / (2.0 * w**2)],
            [eb3 / (2.0 * w**2), var_b2 / (4.0 * w**4)],
        ]
    )
    omega_dstar = np.diag([-1.0 / w, -1.0 / (2.0 * w**2)])
    return LimitCovariances(omega0, omega_star, omega_dstar)


def sandwich(cov: LimitCovariances) -> np.ndarray:
    """Omega_**^{-1} Omega_* Omega_**^{-1}; equals ``cov.omega0``."""
    inv = np.linalg.inv(cov.omega_dstar)
    return inv @ cov.omega_star @ inv


def _symmetric_root(matrix: np.ndarray, power: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(matrix)
    top = float(np.abs(evals).max()) if evals.size else 0.0
    if top == 0.0 or evals.min() <= _SINGULAR_RTOL * top:
        raise NumericalError(f"covariance is singular or indefinite (eigenvalues {evals.tolist()})")
    return (evecs * evals**power) @ evecs.T


def standardize_normal(
    est: EstimateResult,
    truth: tuple[float, float],
    n: int,
    cov: LimitCovariances,
) -> tuple[float, float]:
    """Omega_0^{-1/2} sqrt(n) (eta_hat - eta) with the symmetric (spectral) inverse root."""
    deviation = math.sqrt(n) * np.array([est.eta1 - truth[0], est.eta2 - truth[1]])
    z = _symmetric_root(cov.omega0, -0.5) @ deviation
    return float(z[0]), float(z[1])


def unstandardize_normal(
    z: tuple[float, float],
    truth: tuple[float, float],
    n: int,
    cov: LimitCovariances,
) -> tuple[float, float]:
    """Inverse of ``standardize_normal``: eta + Omega_0^{1/2} z / sqrt(n)."""
    shift = _symmetric_root(cov.omega0, 0.5) @ np.asarray(z, dtype=float) / math.sqrt(n)
    return truth[0] + float(shift[0]), truth[1] + float(shift[1])


def standardize_stable(
    est: EstimateResult,
    truth: tuple[float, float],
    n: int,
    spec: InnovationSpec,
) -> tuple[float, float]:
    """(sqrt(n)(eta1 - phi)/omega, n(eta2 - omega^2)/a_n) for a heavy-tailed b."""
    if not spec.is_heavy_tailed:
        raise DomainError(f"stable standardization needs a heavy-tailed b law, got {spec.variant}", field="variant")
    phi, omega_sq = truth
    z1 = math.sqrt(n) * (est.eta1 - phi) / math.sqrt(omega_sq)
    w = n * (est.eta2 - omega_sq) / tail_norming(spec, n)
    return z1, w


def self_normalized_phi(est: EstimateResult, phi: float, n: int) -> float:
    """sqrt(n)(eta1 - phi)/sqrt(eta2), asymptotically standard normal for every y."""
    if not est.eta2 > 0:
        raise NumericalError(f"eta2 must be positive, got {est.eta2}")
    return math.sqrt(n) * (est.eta1 - phi) / math.sqrt(est.eta2)
