"""Replication engine: simulate -> estimate -> standardize, R times, then aggregate."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np
import pandas as pd
from django.utils import timezone

from rca.exceptions import ExperimentFailure, NumericalError, UsageError

from ..asymptotics import (
    LimitCovariances,
    limit_covariances,
    self_normalized_phi,
    standardize_normal,
    standardize_stable,
)
from ..estimator import EstimateResult, ci_phi, profile_over_y, qmle
from ..innovations import SeedStream, sample_stable_reference
from ..likelihood import LaggedSeries, LikelihoodPoint, limit_f, loglik, loglik_diff_normalized
from ..process import Trajectory, empirical_growth_rate, growth_diagnostics, nondegeneracy, simulate
from .config import ExperimentConfig, ExperimentKind, SurfaceLattice
from .verdicts import Summary, summarize

logger = logging.getLogger(__name__)

# Stream index of the stable reference sample; replications use 0..reps-1
REFERENCE_STREAM_INDEX = 2**40
# Below this many replications the median sup-gap ladder is too noisy to order
SURFACE_MIN_REPS = 100


@dataclass(frozen=True)
class RepRecord:
    """One row of the replication table.

    ``z1``/``z2_or_w`` hold the standardized statistics of the run's kind;
    ``extra`` holds kind-specific diagnostics (growth gaps, surface sup-gaps,
    profile ranges). Failed rows keep NaN estimates and a ``reason``.
    """

    rep: int
    stream_index: int
    y: float = math.nan
    eta1: float = math.nan
    eta2: float = math.nan
    z1: float = math.nan
    z2_or_w: float = math.nan
    ci_lo: float = math.nan
    ci_hi: float = math.nan
    covered: bool | None = None
    on_boundary: bool = False
    failed: bool = False
    reason: str = ""
    extra: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SurfaceScan:
    """Per-node likelihood differences and per-(rep, n) sup-gaps of a surface scan."""

    nodes: pd.DataFrame
    gaps: pd.DataFrame

    @property
    def medians(self) -> dict[int, float]:
        return {int(n): float(v) for n, v in self.gaps.groupby("n")["sup_gap"].median().items()}


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """Sealed outcome of ``run_experiment``; ``records`` excludes the failures listed separately."""

    config: ExperimentConfig
    records: tuple[RepRecord, ...]
    failures: tuple[RepRecord, ...]
    summary: Summary
    started_at: datetime
    wall_time: float
    reference: np.ndarray | None = None
    surface: SurfaceScan | None = None

    @property
    def all_records(self) -> list[RepRecord]:
        return sorted(self.records + self.failures, key=lambda r: (r.rep, r.extra.get("n_level", 0.0), r.y))

    @property
    def failed_reps(self) -> int:
        return len({r.rep for r in self.failures})

    @property
    def passed(self) -> bool:
        return self.summary.passed


def n_ladder(n: int) -> list[int]:
    """{n/4, n/2, n} (deduplicated, at least 2)."""
    return sorted({max(2, n // 4), max(2, n // 2), n})


def stable_reference(cfg: ExperimentConfig) -> np.ndarray:
    """Partial-sum reference draws for the stable coordinate, on their own stream."""
    stream = SeedStream(cfg.master_seed, REFERENCE_STREAM_INDEX)
    return sample_stable_reference(cfg.spec.alpha, cfg.reference_m, cfg.reference_reps, cfg.spec, stream)


def _simulate_rep(cfg: ExperimentConfig, rep: int, record_innovations: bool = False) -> Trajectory:
    return simulate(
        cfg.params,
        cfg.spec,
        cfg.n,
        SeedStream(cfg.master_seed, rep),
        record_innovations=record_innovations,
        log_space=cfg.log_space,
    )


def _estimate_record(cfg, rep, est: EstimateResult, z1: float, z2: float, **extra) -> RepRecord:
    interval = ci_phi(est, cfg.n, cfg.ci_level)
    phi = cfg.params.phi
    return RepRecord(
        rep=rep,
        stream_index=rep,
        y=est.y,
        eta1=est.eta1,
        eta2=est.eta2,
        z1=z1,
        z2_or_w=z2,
        ci_lo=interval.lo,
        ci_hi=interval.hi,
        covered=interval.lo <= phi <= interval.hi,
        on_boundary=est.on_boundary,
        extra=extra,
    )


def _phi_statistic(cfg: ExperimentConfig, est: EstimateResult) -> float:
    phi, omega_sq = cfg.truth
    return math.sqrt(cfg.n) * (est.eta1 - phi) / math.sqrt(omega_sq)


def _profile_diagnostics(cfg: ExperimentConfig, traj: Trajectory, estimates: list[EstimateResult]) -> dict[str, float]:
    phi, omega_sq = cfg.truth
    lag = LaggedSeries.from_trajectory(traj)
    y_curve = [loglik(lag, LikelihoodPoint(phi, omega_sq, float(y))) / lag.n for y in cfg.profile.y_values]
    y_ref = cfg.y_values[0]
    x_curve = [loglik(lag, LikelihoodPoint(phi, float(x), y_ref)) / lag.n for x in cfg.profile.x_values]
    eta1 = [e.eta1 for e in estimates]
    return {
        "y_flat_range": float(np.ptp(y_curve)),
        "x_contrast_range": float(np.ptp(x_curve)),
        "eta1_spread": float(np.std(eta1, ddof=1)) if len(eta1) > 1 else 0.0,
    }


def _growth_record(cfg: ExperimentConfig, rep: int, traj: Trajectory) -> RepRecord:
    half = cfg.n // 2
    diagnostics = growth_diagnostics(traj)
    log_abs, _ = traj.log_magnitudes()
    rate = empirical_growth_rate(traj)
    return RepRecord(
        rep=rep,
        stream_index=rep,
        extra={
            "cauchy_gap": float(abs(diagnostics.normalized[-1] - diagnostics.normalized[half])),
            "growth_rate": rate,
            "rate_error": abs(rate - cfg.lyapunov),
            "nondegeneracy": nondegeneracy(traj),
            "diverged": float(log_abs[-1] > log_abs[half]),
        },
    )


def run_replication(cfg: ExperimentConfig, rep: int, cov: LimitCovariances | None = None) -> list[RepRecord]:
    """Records of replication ``rep`` (one per y; one in total for growth runs).

    Depends only on (cfg, rep), so any replication can be rerun in isolation.
    Numerical failures are returned as a single failed record.
    """
    kind = cfg.kind
    try:
        if kind is ExperimentKind.GROWTH:
            return [_growth_record(cfg, rep, _simulate_rep(cfg, rep, record_innovations=True))]
        if kind is ExperimentKind.LIKELIHOOD_SURFACE:
            return _surface_rep(cfg, cfg.surface, rep)[1]

        traj = _simulate_rep(cfg, rep)
        if kind is ExperimentKind.Y_PROFILE:
            estimates = profile_over_y(traj, cfg.region, cfg.y_values, cfg.estimator_cfg)
            extra = _profile_diagnostics(cfg, traj, estimates)
            phi = cfg.params.phi
            return [
                _estimate_record(cfg, rep, est, _phi_statistic(cfg, est), self_normalized_phi(est, phi, cfg.n), **extra)
                for est in estimates
            ]

        records = []
        for y in cfg.y_values:
            est = qmle(traj, cfg.region, y, cfg.estimator_cfg)
            if kind is ExperimentKind.NORMAL_LIMIT:
                z1, z2 = standardize_normal(est, cfg.truth, cfg.n, cov or limit_covariances(cfg.spec))
            elif kind is ExperimentKind.STABLE_LIMIT:
                z1, z2 = standardize_stable(est, cfg.truth, cfg.n, cfg.spec)
            else:
                z1, z2 = _phi_statistic(cfg, est), math.nan
            records.append(_estimate_record(cfg, rep, est, z1, z2))
        return records
    except NumericalError as e:
        logger.warning(f"Replication {rep} failed: {e}")
        return [RepRecord(rep=rep, stream_index=rep, failed=True, reason=f"{type(e).__name__}: {e}")]


def _surface_rep(cfg: ExperimentConfig, lattice: SurfaceLattice, rep: int) -> tuple[list[dict], list[RepRecord]]:
    phi, omega_sq = cfg.truth
    theta = LikelihoodPoint(phi, omega_sq, cfg.sigma_sq)
    traj = _simulate_rep(cfg, rep)
    s_values, x_values, y_values = lattice.s_values, lattice.x_values, lattice.y_values
    f_values = {(s, x): limit_f(s, x, phi, omega_sq) for s in s_values for x in x_values}

    nodes: list[dict] = []
    records: list[RepRecord] = []
    for level in n_ladder(cfg.n):
        lag = LaggedSeries.from_trajectory(traj.head(level))
        diffs = np.empty((s_values.size, x_values.size, y_values.size))
        for i, s in enumerate(s_values):
            for j, x in enumerate(x_values):
                for k, y in enumerate(y_values):
                    diff = loglik_diff_normalized(lag, LikelihoodPoint(float(s), float(x), float(y)), theta)
                    diffs[i, j, k] = diff
                    nodes.append({"rep": rep, "n": level, "s": s, "x": x, "y": y, "diff": diff, "f": f_values[(s, x)]})
        f_grid = np.array([[f_values[(s, x)] for x in x_values] for s in s_values])
        sup_gap = float(np.max(np.abs(diffs - f_grid[:, :, None])))
        y_spread = float(np.max(np.ptp(diffs, axis=2)))
        records.append(
            RepRecord(
                rep=rep,
                stream_index=rep,
                extra={"n_level": float(level), "sup_gap": sup_gap, "y_slice_spread": y_spread},
            )
        )
    return nodes, records


def likelihood_surface_scan(
    cfg: ExperimentConfig,
    lattice: SurfaceLattice | None = None,
    threads: int = 1,
) -> SurfaceScan:
    """Normalized likelihood differences against f on the lattice, per replication and per n in {n/4, n/2, n}.

    The truth is the reference point theta = (phi, omega^2, sigma^2); each
    replication simulates one path of length n and evaluates its prefixes.
    Failed replications are left out of both tables.
    """
    if cfg.kind is not ExperimentKind.LIKELIHOOD_SURFACE:
        raise UsageError(f"surface scans need a likelihood_surface experiment, got {cfg.kind.value}")
    lattice = lattice or cfg.surface
    if cfg.reps < SURFACE_MIN_REPS:
        logger.warning(f"Surface scan with {cfg.reps} replications; the decreasing-median check may flake")

    def work(rep: int):
        try:
            return _surface_rep(cfg, lattice, rep)
        except NumericalError as e:
            logger.warning(f"Surface replication {rep} failed: {e}")
            return [], []

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(executor.map(work, range(cfg.reps)))

    node_rows = [row for nodes, _ in results for row in nodes]
    gap_rows = [
        {
            "rep": r.rep,
            "n": int(r.extra["n_level"]),
            "sup_gap": r.extra["sup_gap"],
            "y_slice_spread": r.extra["y_slice_spread"],
        }
        for _, records in results
        for r in records
    ]
    node_cols = ["rep", "n", "s", "x", "y", "diff", "f"]
    gap_cols = ["rep", "n", "sup_gap", "y_slice_spread"]
    return SurfaceScan(pd.DataFrame(node_rows, columns=node_cols), pd.DataFrame(gap_rows, columns=gap_cols))


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Run ``cfg.reps`` replications on streams (master_seed, r) and aggregate them.

    Replications run on a thread pool of size ``threads``; records are sorted
    before aggregation, so the report does not depend on the thread count.

    Raises:
        ExperimentFailure: more than ``cfg.max_failed_fraction`` of the
            replications failed. The sealed report is attached.
    """
    started_at = timezone.now()
    clock = time.monotonic()
    logger.info(
        f"Starting {cfg.kind} experiment: n={cfg.n}, reps={cfg.reps}, seed={cfg.master_seed}, threads={threads}"
    )

    cov = limit_covariances(cfg.spec) if cfg.kind is ExperimentKind.NORMAL_LIMIT else None
    reference = stable_reference(cfg) if cfg.kind is ExperimentKind.STABLE_LIMIT else None

    surface = None
    if cfg.kind is ExperimentKind.LIKELIHOOD_SURFACE:
        surface = likelihood_surface_scan(cfg, cfg.surface, threads)
        scanned = set(surface.gaps["rep"].tolist())
        rows = [
            RepRecord(
                rep=int(row.rep),
                stream_index=int(row.rep),
                extra={
                    "n_level": float(row.n),
                    "sup_gap": float(row.sup_gap),
                    "y_slice_spread": float(row.y_slice_spread),
                },
            )
            for row in surface.gaps.itertuples(index=False)
        ]
        rows += [
            RepRecord(rep=r, stream_index=r, failed=True, reason="surface scan failed")
            for r in range(cfg.reps)
            if r not in scanned
        ]
    else:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
            batches = list(executor.map(lambda r: run_replication(cfg, r, cov), range(cfg.reps)))
        rows = [record for batch in batches for record in batch]

    records = tuple(sorted((r for r in rows if not r.failed), key=lambda r: (r.rep, r.extra.get("n_level", 0.0), r.y)))
    failures = tuple(sorted((r for r in rows if r.failed), key=lambda r: r.rep))
    summary = summarize(cfg, records + failures, reference)

    report = ExperimentReport(
        config=cfg,
        records=records,
        failures=failures,
        summary=summary,
        started_at=started_at,
        wall_time=time.monotonic() - clock,
        reference=reference,
        surface=surface,
    )

    failed_fraction = report.failed_reps / cfg.reps
    if failed_fraction > cfg.max_failed_fraction:
        message = f"{report.failed_reps} of {cfg.reps} replications failed (limit {cfg.max_failed_fraction:.0%})"
        logger.error(message)
        raise ExperimentFailure(message, report=report)

    logger.info(
        f"Finished {cfg.kind} experiment in {report.wall_time:.1f}s: "
        f"{len({r.rep for r in records})} ok, {report.failed_reps} failed, "
        f"verdict {'PASS' if report.passed else 'FAIL'}"
    )
    return report
