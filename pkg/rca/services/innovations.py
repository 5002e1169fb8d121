"""Innovation laws for the pairs (b_k, e_k), seed streams and law-level moments."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from enum import StrEnum
from typing import NamedTuple

import numpy as np
from scipy import integrate, stats

from rca.exceptions import ConfigurationError, DomainError, QuadratureError

logger = logging.getLogger(__name__)

# Absolute accuracy promised by lyapunov_exponent
LYAPUNOV_ABS_TOL = 1e-6

DEFAULT_REFERENCE_M = 100_000

_E_LAW_PATTERN = re.compile(r"^\s*PointMass\(\s*([^)]+?)\s*\)\s*$")


class BVariant(StrEnum):
    """Law family of the coefficient perturbation b."""

    GAUSSIAN = "GaussianBGaussianE"
    POINT_MASS = "PointMassB"
    PARETO_TAIL = "ParetoTailB"


@dataclass(frozen=True)
class ELaw:
    """Law of the additive noise e: centered Gaussian or a point mass at ``point``."""

    kind: str = "Gaussian"
    point: float = 0.0

    def __post_init__(self):
        if self.kind not in ("Gaussian", "PointMass"):
            raise ConfigurationError(f"unknown e law {self.kind!r}", field="e_law")
        if not math.isfinite(self.point):
            raise ConfigurationError("point mass location must be finite", field="e_law")

    @classmethod
    def parse(cls, text: str) -> ELaw:
        """Parse ``Gaussian`` or ``PointMass(c)``."""
        if text.strip() == "Gaussian":
            return cls()
        match = _E_LAW_PATTERN.match(text)
        if not match:
            raise ConfigurationError(f"e law must be 'Gaussian' or 'PointMass(c)', got {text!r}", field="e_law")
        try:
            point = float(match.group(1))
        except ValueError:
            raise ConfigurationError(f"invalid point mass location in {text!r}", field="e_law")
        return cls(kind="PointMass", point=point)

    @property
    def is_point_mass(self) -> bool:
        return self.kind == "PointMass"

    def __str__(self) -> str:
        if self.is_point_mass:
            return f"PointMass({self.point!r})"
        return "Gaussian"


@dataclass(frozen=True)
class InnovationSpec:
    """Distribution of the i.i.d. pairs (b_0, e_0); b and e are always drawn independently.

    ``omega_sq`` is E b_0^2 (ignored for PointMassB, where b_0 = ``b_point``),
    ``sigma_sq`` is E e_0^2 for Gaussian e. ParetoTailB uses the pure Pareto tail
    P{b_0^2 > x} = (c/x)^alpha for x >= c with c = omega_sq (alpha - 1) / alpha and a
    symmetric sign, so E b_0^2 = omega_sq exactly.
    """

    variant: BVariant = BVariant.GAUSSIAN
    omega_sq: float = 1.0
    sigma_sq: float = 1.0
    alpha: float = 1.5
    b_point: float = 0.0
    e_law: ELaw = field(default_factory=ELaw)

    def __post_init__(self):
        try:
            object.__setattr__(self, "variant", BVariant(self.variant))
        except ValueError:
            raise ConfigurationError(f"unknown innovation variant {self.variant!r}", field="variant")
        if isinstance(self.e_law, str):
            object.__setattr__(self, "e_law", ELaw.parse(self.e_law))
        if self.variant is not BVariant.POINT_MASS and not (self.omega_sq > 0 and math.isfinite(self.omega_sq)):
            raise ConfigurationError(f"omega_sq must be positive, got {self.omega_sq}", field="omega_sq")
        if not self.e_law.is_point_mass and not (self.sigma_sq > 0 and math.isfinite(self.sigma_sq)):
            raise ConfigurationError(f"sigma_sq must be positive, got {self.sigma_sq}", field="sigma_sq")
        if self.variant is BVariant.PARETO_TAIL and not (1.0 < self.alpha < 2.0):
            raise ConfigurationError(f"alpha must lie in (1, 2), got {self.alpha}", field="alpha")
        if not math.isfinite(self.b_point):
            raise ConfigurationError("b_point must be finite", field="b_point")

    @property
    def is_heavy_tailed(self) -> bool:
        return self.variant is BVariant.PARETO_TAIL

    @property
    def pareto_scale(self) -> float:
        """Lower end c of the support of b_0^2 under ParetoTailB."""
        if not self.is_heavy_tailed:
            raise DomainError(f"{self.variant} has no Pareto tail", field="variant")
        return self.omega_sq * (self.alpha - 1.0) / self.alpha


@dataclass
class SeedStream:
    """Reproducible random stream keyed by (master_seed, stream_index).

    Splitting rule: the generator is PCG64 seeded from
    ``numpy.random.SeedSequence(master_seed, spawn_key=(stream_index,))``, i.e.
    numpy's counter-keyed hashing of the pair. Equal keys give bit-identical
    draws; distinct indices give independent streams. Draws advance the state
    held by this object; build a fresh ``SeedStream`` to replay.
    """

    master_seed: int
    stream_index: int = 0
    _rng: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer", field="seed")
        if self.stream_index < 0:
            raise ConfigurationError("stream_index must be nonnegative", field="stream_index")

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
            self._rng = np.random.Generator(np.random.PCG64(seq))
        return self._rng

    @property
    def record(self) -> tuple[int, int]:
        return (self.master_seed, self.stream_index)


class MomentSummary(NamedTuple):
    omega_sq: float
    sigma_sq: float
    eb3: float
    var_b2: float


def _sample_b(spec: InnovationSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    if spec.variant is BVariant.GAUSSIAN:
        return rng.normal(0.0, math.sqrt(spec.omega_sq), size)
    if spec.variant is BVariant.POINT_MASS:
        return np.full(size, spec.b_point, dtype=float)
    # numpy's pareto() is the Lomax law; 1 + Lomax is Pareto with unit scale
    b_sq = spec.pareto_scale * (1.0 + rng.pareto(spec.alpha, size))
    signs = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return signs * np.sqrt(b_sq)


def _sample_e(spec: InnovationSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    if spec.e_law.is_point_mass:
        return np.full(size, spec.e_law.point, dtype=float)
    return rng.normal(0.0, math.sqrt(spec.sigma_sq), size)


def sample_pairs(spec: InnovationSpec, stream: SeedStream, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` independent pairs; the b block is drawn before the e block."""
    if size < 0:
        raise ConfigurationError("size must be nonnegative", field="size")
    rng = stream.rng
    b = _sample_b(spec, rng, size)
    e = _sample_e(spec, rng, size)
    return b, e


def sample_pair(spec: InnovationSpec, stream: SeedStream) -> tuple[float, float]:
    """One draw of (b_0, e_0); advances the stream."""
    b, e = sample_pairs(spec, stream, 1)
    return float(b[0]), float(e[0])


def moment_summary(spec: InnovationSpec) -> MomentSummary:
    """Closed-form (E b^2, E e^2, E b^3, var b^2) of the law."""
    sigma_sq = spec.e_law.point**2 if spec.e_law.is_point_mass else spec.sigma_sq
    if spec.variant is BVariant.GAUSSIAN:
        return MomentSummary(spec.omega_sq, sigma_sq, 0.0, 2.0 * spec.omega_sq**2)
    if spec.variant is BVariant.POINT_MASS:
        return MomentSummary(spec.b_point**2, sigma_sq, spec.b_point**3, 0.0)
    # Symmetric sign: odd moments vanish; b^2 has infinite variance for alpha < 2
    return MomentSummary(spec.omega_sq, sigma_sq, 0.0, math.inf)


def _b_density(spec: InnovationSpec):
    """Density of b_0, its support as a list of intervals, and its scale."""
    if spec.variant is BVariant.GAUSSIAN:
        scale = math.sqrt(spec.omega_sq)
        return stats.norm(scale=scale).pdf, [(-math.inf, math.inf)], scale

    c = spec.pareto_scale
    alpha = spec.alpha
    root_c = math.sqrt(c)

    # |b| has tail (c/t^2)^alpha on t >= sqrt(c); split evenly between the signs
    def pdf(b):
        return alpha * c**alpha * np.abs(b) ** (-2.0 * alpha - 1.0)

    return pdf, [(-math.inf, -root_c), (root_c, math.inf)], root_c


# Cuts at these multiples of the law's scale keep every quad piece on the bulk of the density
_SCALE_CUTS = (1.0, 2.0, 4.0, 8.0)


def _breakpoints(lo: float, hi: float, singular: float, scale: float) -> list[float]:
    points = {lo, hi}
    candidates = [0.0, singular - 1.0, singular, singular + 1.0, singular - scale, singular + scale]
    candidates += [sign * k * scale for k in _SCALE_CUTS for sign in (-1.0, 1.0)]
    for p in candidates:
        if lo < p < hi:
            points.add(p)
    return sorted(points)


def lyapunov_exponent(spec: InnovationSpec, phi: float) -> float:
    """E log|phi + b_0|.

    Exact for PointMassB; otherwise adaptive Gauss-Kronrod quadrature
    (``scipy.integrate.quad``) against the density of b_0. The support is cut
    at the log singularity b = -phi, so every piece has it at an endpoint, and
    at 0 and multiples of the law's scale, so narrow laws are not stepped over.
    Absolute accuracy is at most ``LYAPUNOV_ABS_TOL``.
    """
    if spec.variant is BVariant.POINT_MASS:
        value = abs(phi + spec.b_point)
        return math.log(value) if value > 0 else -math.inf

    pdf, support, scale = _b_density(spec)
    singular = -phi

    def integrand(b):
        gap = abs(phi + b)
        if gap == 0.0:
            return 0.0
        return math.log(gap) * float(pdf(b))

    total = 0.0
    abserr = 0.0
    for lo, hi in support:
        cuts = _breakpoints(lo, hi, singular, scale)
        for a, b in zip(cuts[:-1], cuts[1:]):
            result = integrate.quad(integrand, a, b, epsabs=1e-10, epsrel=1e-10, limit=200, full_output=1)
            # quad appends a message when ier != 0; a roundoff flag with a tiny error estimate is still usable
            if len(result) > 3 and result[1] > LYAPUNOV_ABS_TOL / 10:
                raise QuadratureError(
                    "quadrature for E log|phi + b| did not converge",
                    diagnostics={"phi": phi, "interval": (a, b), "abserr": result[1], "message": result[3]},
                )
            total += result[0]
            abserr += result[1]

    if abserr > LYAPUNOV_ABS_TOL:
        raise QuadratureError(
            f"E log|phi + b| error estimate {abserr:.3g} exceeds {LYAPUNOV_ABS_TOL}",
            diagnostics={"phi": phi, "abserr": abserr, "value": total},
        )
    logger.debug(f"Lyapunov exponent for {spec.variant} at phi={phi}: {total:.9f} (err {abserr:.2g})")
    return total


def tail_norming(spec: InnovationSpec, n: int) -> float:
    """a_n = inf{x : P(b_0^2 > x) <= 1/n} = c n^(1/alpha) for the pure Pareto tail."""
    if not spec.is_heavy_tailed:
        raise DomainError(f"tail norming needs a heavy-tailed b law, got {spec.variant}", field="variant")
    if n < 1:
        raise ConfigurationError("n must be positive", field="n")
    return spec.pareto_scale * n ** (1.0 / spec.alpha)


def empirical_tail_ratio(b: np.ndarray, spec: InnovationSpec, x: float) -> float:
    """#{b_i^2 > x}/N divided by the exact tail (c/x)^alpha."""
    c = spec.pareto_scale
    if x < c:
        raise DomainError(f"tail ratio is defined for x >= c = {c}", field="x")
    b = np.asarray(b, dtype=float)
    empirical = np.count_nonzero(b * b > x) / b.size
    return empirical / (c / x) ** spec.alpha


def sample_stable_reference(
    alpha: float,
    m: int,
    reps: int,
    spec: InnovationSpec,
    stream: SeedStream,
) -> np.ndarray:
    """``reps`` draws of (1/a_m) sum_{i<=m} (b_i^2 - omega^2), the empirical law of the stable limit."""
    if not spec.is_heavy_tailed:
        raise DomainError("the stable reference needs a ParetoTailB law", field="variant")
    if not math.isclose(alpha, spec.alpha, rel_tol=0.0, abs_tol=1e-12):
        raise DomainError(f"alpha={alpha} does not match the law's alpha={spec.alpha}", field="alpha")
    if m < 1:
        raise ConfigurationError("m must be positive", field="m")
    if reps <= 0:
        return np.empty(0)

    rng = stream.rng
    c = spec.pareto_scale
    a_m = tail_norming(spec, m)
    out = np.empty(reps)
    # Rows per batch keep the working array near 16 MB
    batch = max(1, 2_000_000 // m)
    for start in range(0, reps, batch):
        rows = min(batch, reps - start)
        b_sq = c * (1.0 + rng.pareto(alpha, (rows, m)))
        out[start : start + rows] = (b_sq.sum(axis=1) - m * spec.omega_sq) / a_m
    logger.debug(f"Stable reference: {reps} draws, m={m}, a_m={a_m:.6g}")
    return out
