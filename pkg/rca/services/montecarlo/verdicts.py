"""Summary statistics and acceptance verdicts computed from replication records.

``summarize`` only looks at the records (and, for stable-limit runs, the
reference sample), sorted by (rep, y, n_level) first, so the summary of a
report can be recomputed from its exported records and does not depend on the
order in which replications finished.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from itertools import groupby
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import stats as sps

from rca.exceptions import UsageError

from .config import ExperimentConfig, ExperimentKind
from .stats import ks_one_sample, ks_two_sample, rank_correlation

if TYPE_CHECKING:
    from .service import RepRecord


class Verdict(NamedTuple):
    name: str
    value: float
    bound: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} = {self.value:.6g} (required {self.bound})"


@dataclass(frozen=True)
class Summary:
    statistics: dict[str, float]
    verdicts: tuple[Verdict, ...]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def _below(name: str, value: float, bound: float) -> Verdict:
    return Verdict(name, value, f"< {bound:g}", bool(value < bound))


def _above(name: str, value: float, bound: float) -> Verdict:
    return Verdict(name, value, f"> {bound:g}", bool(value > bound))


def _within(name: str, value: float, lo: float, hi: float) -> Verdict:
    return Verdict(name, value, f"in ({lo:g}, {hi:g})", bool(lo < value < hi))


def _median(values: Iterable[float]) -> float:
    arr = np.asarray(list(values), dtype=float)
    return float(np.median(arr)) if arr.size else math.nan


def _sort_key(record: RepRecord):
    y = -math.inf if math.isnan(record.y) else record.y
    return (record.rep, y, record.extra.get("n_level", 0.0))


def _per_rep(records: Sequence[RepRecord]) -> list[RepRecord]:
    """First record of each replication (rep-level diagnostics are repeated on every row)."""
    return [next(group) for _, group in groupby(records, key=lambda r: r.rep)]


def _y_label(y: float) -> str:
    return f"y={y:g}"


def _y_slices(cfg, records):
    """One record per replication in each slice; several y values get ``[y=...]`` suffixes."""
    if len(cfg.y_values) == 1:
        yield "", records
        return
    for y in cfg.y_values:
        at_y = [r for r in records if r.y == y]
        if at_y:
            yield f"[{_y_label(y)}]", at_y


def _normal_limit(cfg, records, out, verdicts):
    t = cfg.verdict
    for suffix, at_y in _y_slices(cfg, records):
        z = np.array([[r.z1, r.z2_or_w] for r in at_y])
        means = z.mean(axis=0)
        cov = np.cov(z, rowvar=False, ddof=1) if len(at_y) > 1 else np.full((2, 2), math.nan)
        ks1 = ks_one_sample(z[:, 0], sps.norm.cdf)
        ks2 = ks_one_sample(z[:, 1], sps.norm.cdf)
        values = {
            "mean_z1": float(means[0]),
            "mean_z2": float(means[1]),
            "cov_z11": float(cov[0, 0]),
            "cov_z12": float(cov[0, 1]),
            "cov_z22": float(cov[1, 1]),
            "ks_z1_d": ks1.d,
            "ks_z1_p": ks1.p,
            "ks_z2_d": ks2.d,
            "ks_z2_p": ks2.p,
            "coverage": _coverage(at_y),
        }
        out.update({name + suffix: value for name, value in values.items()})
        verdicts += [
            _below("mean_z1_abs" + suffix, abs(means[0]), t.mean_tol),
            _below("mean_z2_abs" + suffix, abs(means[1]), t.mean_tol),
            _below("cov_z11_error" + suffix, abs(cov[0, 0] - 1.0), t.cov_tol),
            _below("cov_z12_error" + suffix, abs(cov[0, 1]), t.cov_tol),
            _below("cov_z22_error" + suffix, abs(cov[1, 1] - 1.0), t.cov_tol),
            _above("ks_z1_p" + suffix, ks1.p, t.ks_p_min),
            _above("ks_z2_p" + suffix, ks2.p, t.ks_p_min),
        ]


def _stable_limit(cfg, records, reference, out, verdicts):
    t = cfg.verdict
    if reference is None or len(reference) == 0:
        raise UsageError("stable-limit verdicts need the partial-sum reference sample")
    for suffix, at_y in _y_slices(cfg, records):
        z1 = np.array([r.z1 for r in at_y])
        w = np.array([r.z2_or_w for r in at_y])
        ks_w = ks_two_sample(w, reference)
        ks_z1 = ks_one_sample(z1, sps.norm.cdf)
        tau = rank_correlation(z1, w) if len(at_y) > 1 else math.nan
        values = {
            "ks_w_d": ks_w.d,
            "ks_w_p": ks_w.p,
            "ks_z1_d": ks_z1.d,
            "ks_z1_p": ks_z1.p,
            "kendall_tau": tau,
            "median_w": _median(w),
            "median_reference": _median(reference),
            "coverage": _coverage(at_y),
        }
        out.update({name + suffix: value for name, value in values.items()})
        verdicts += [
            _above("ks_w_p" + suffix, ks_w.p, t.ks_p_min),
            _above("ks_z1_p" + suffix, ks_z1.p, t.ks_p_min),
            _below("kendall_tau_abs" + suffix, abs(tau), t.tau_max),
        ]


def _consistency(cfg, records, out, verdicts):
    t = cfg.verdict
    phi, omega_sq = cfg.truth
    hits = [abs(r.eta1 - phi) <= t.consistency_tol and abs(r.eta2 - omega_sq) <= t.consistency_tol for r in records]
    rate = float(np.mean(hits))
    out.update(
        consistency_rate=rate,
        mean_eta1=float(np.mean([r.eta1 for r in records])),
        mean_eta2=float(np.mean([r.eta2 for r in records])),
        boundary_rate=float(np.mean([r.on_boundary for r in records])),
    )
    verdicts.append(Verdict("consistency_rate", rate, f">= {t.consistency_rate:g}", rate >= t.consistency_rate))


def _coverage(records) -> float:
    flags = [r.covered for r in records if r.covered is not None]
    return float(np.mean(flags)) if flags else math.nan


def _y_profile(cfg, records, out, verdicts):
    t = cfg.verdict
    for y in cfg.y_values:
        at_y = [r for r in records if r.y == y]
        if not at_y:
            continue
        label = _y_label(y)
        ks_z1 = ks_one_sample([r.z1 for r in at_y], sps.norm.cdf)
        ks_self = ks_one_sample([r.z2_or_w for r in at_y], sps.norm.cdf)
        covered = sum(1 for r in at_y if r.covered)
        coverage = covered / len(at_y)
        out.update(
            {
                f"ks_z1_p[{label}]": ks_z1.p,
                f"ks_self_normalized_p[{label}]": ks_self.p,
                f"covered_count[{label}]": float(covered),
                f"coverage[{label}]": coverage,
            }
        )
        verdicts += [
            _above(f"ks_z1_p[{label}]", ks_z1.p, t.ks_p_min),
            _above(f"ks_self_normalized_p[{label}]", ks_self.p, t.ks_p_min),
            _within(f"coverage[{label}]", coverage, t.coverage_lo, t.coverage_hi),
        ]

    reps = _per_rep(records)
    flat = _median(r.extra["y_flat_range"] for r in reps)
    contrast = _median(r.extra["x_contrast_range"] for r in reps)
    out.update(median_y_flat_range=flat, median_x_contrast_range=contrast)
    verdicts += [
        _below("median_y_flat_range", flat, t.flat_max),
        _above("median_x_contrast_range", contrast, t.contrast_min),
    ]
    if len(cfg.y_values) > 1:
        spread = _median(r.extra["eta1_spread"] for r in reps)
        bound = t.y_spread_max * math.sqrt(cfg.truth[1] / cfg.n)
        out["median_eta1_spread"] = spread
        verdicts.append(_below("median_eta1_spread", spread, bound))


def _growth(cfg, records, out, verdicts):
    t = cfg.verdict
    gap = _median(r.extra["cauchy_gap"] for r in records)
    rate_error = _median(r.extra["rate_error"] for r in records)
    diverged = float(np.mean([r.extra["diverged"] for r in records]))
    nondegenerate = float(np.mean([r.extra["nondegeneracy"] > 0 for r in records]))
    out.update(
        lyapunov_exponent=cfg.lyapunov,
        median_cauchy_gap=gap,
        median_growth_rate=_median(r.extra["growth_rate"] for r in records),
        median_rate_error=rate_error,
        divergence_fraction=diverged,
        nondegenerate_fraction=nondegenerate,
    )
    verdicts += [
        _below("median_cauchy_gap", gap, t.cauchy_max),
        _below("median_rate_error", rate_error, t.rate_tol),
        _above("divergence_fraction", diverged, t.divergence_rate),
    ]


def _likelihood_surface(cfg, records, out, verdicts):
    t = cfg.verdict
    levels = sorted({int(r.extra["n_level"]) for r in records})
    medians = []
    for level in levels:
        at_level = [r for r in records if int(r.extra["n_level"]) == level]
        median = _median(r.extra["sup_gap"] for r in at_level)
        medians.append(median)
        out[f"median_sup_gap[n={level}]"] = median
    largest = [r for r in records if int(r.extra["n_level"]) == levels[-1]]
    y_spread = _median(r.extra["y_slice_spread"] for r in largest)
    out["median_y_slice_spread"] = y_spread

    decreasing = float(all(a > b for a, b in zip(medians[:-1], medians[1:])))
    verdicts += [
        Verdict("sup_gap_decreasing", decreasing, "== 1", decreasing == 1.0),
        _below(f"median_sup_gap[n={levels[-1]}]", medians[-1], t.gap_max),
        _below("median_y_slice_spread", y_spread, t.gap_max),
    ]


def summarize(
    cfg: ExperimentConfig,
    records: Sequence[RepRecord],
    reference: Sequence[float] | None = None,
) -> Summary:
    """Statistics and verdicts for ``cfg.kind`` from all records (failed ones included)."""
    ordered = sorted(records, key=_sort_key)
    ok = [r for r in ordered if not r.failed]
    failed_reps = {r.rep for r in ordered if r.failed}
    out: dict[str, float] = {
        "reps_total": float(len({r.rep for r in ordered})),
        "reps_failed": float(len(failed_reps)),
        "records": float(len(ok)),
    }
    verdicts: list[Verdict] = []
    if not ok:
        verdicts.append(Verdict("successful_records", 0.0, "> 0", False))
        return Summary(out, tuple(verdicts))

    kind = cfg.kind
    if kind is ExperimentKind.NORMAL_LIMIT:
        _normal_limit(cfg, ok, out, verdicts)
    elif kind is ExperimentKind.STABLE_LIMIT:
        _stable_limit(cfg, ok, reference, out, verdicts)
    elif kind is ExperimentKind.CONSISTENCY:
        _consistency(cfg, ok, out, verdicts)
    elif kind is ExperimentKind.Y_PROFILE:
        _y_profile(cfg, ok, out, verdicts)
    elif kind is ExperimentKind.GROWTH:
        _growth(cfg, ok, out, verdicts)
    else:
        _likelihood_surface(cfg, ok, out, verdicts)
    return Summary(out, tuple(verdicts))
