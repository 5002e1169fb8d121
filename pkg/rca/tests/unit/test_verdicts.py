"""Unit tests for summary statistics and acceptance verdicts."""

import math
import random

import numpy as np
import pytest
from scipy import stats

from rca.exceptions import UsageError
from rca.services.montecarlo.config import ExperimentKind, VerdictThresholds
from rca.services.montecarlo.verdicts import Verdict, summarize
from rca.tests.factories import (
    ExperimentConfigFactory,
    FailedRepRecordFactory,
    GrowthConfigFactory,
    NormalLimitConfigFactory,
    ParetoSpecFactory,
    RepRecordFactory,
)


class TestVerdict:
    def test_line(self):
        assert Verdict("mean_z1_abs", 0.05, "< 0.1", True).line() == "PASS mean_z1_abs = 0.05 (required < 0.1)"

    def test_failed_line(self):
        assert Verdict("ks_z1_p", 0.001234567, "> 0.01", False).line() == "FAIL ks_z1_p = 0.00123457 (required > 0.01)"


class TestSummarize:
    """Tests for summarize()."""

    def test_consistency_pass(self):
        cfg = ExperimentConfigFactory()
        summary = summarize(cfg, [RepRecordFactory(rep=r) for r in range(4)])
        assert summary.statistics["consistency_rate"] == 1.0
        assert summary.passed

    def test_consistency_fail(self):
        cfg = ExperimentConfigFactory()
        records = [RepRecordFactory(rep=r) for r in range(3)] + [RepRecordFactory(rep=3, eta1=2.0)]
        summary = summarize(cfg, records)
        assert summary.statistics["consistency_rate"] == 0.75
        assert not summary.passed

    def test_failed_records_are_counted_not_used(self):
        cfg = ExperimentConfigFactory()
        summary = summarize(cfg, [RepRecordFactory(rep=0), FailedRepRecordFactory(rep=1)])
        assert summary.statistics["reps_total"] == 2.0
        assert summary.statistics["reps_failed"] == 1.0
        assert summary.statistics["records"] == 1.0
        assert summary.passed

    def test_no_successful_records(self):
        summary = summarize(ExperimentConfigFactory(), [FailedRepRecordFactory(rep=0)])
        assert not summary.passed
        assert summary.verdicts[0].name == "successful_records"

    def test_order_independent(self):
        cfg = ExperimentConfigFactory()
        rng = np.random.default_rng(0)
        records = [RepRecordFactory(rep=r, eta1=1.5 + 0.1 * rng.normal()) for r in range(20)]
        shuffled = records.copy()
        random.Random(1).shuffle(shuffled)
        assert summarize(cfg, records) == summarize(cfg, shuffled)

    def test_normal_limit(self):
        cfg = NormalLimitConfigFactory(verdict=VerdictThresholds(cov_tol=2.0))
        n = 100
        quantiles = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        records = [
            RepRecordFactory(rep=r, z1=float(quantiles[r]), z2_or_w=float(quantiles[(r * 37) % n]), covered=r % 20 != 0)
            for r in range(n)
        ]
        summary = summarize(cfg, records)
        assert summary.statistics["mean_z1"] == pytest.approx(0.0, abs=1e-12)
        assert summary.statistics["coverage"] == 0.95
        assert summary.statistics["ks_z1_p"] == pytest.approx(1.0)
        assert summary.passed

    def test_normal_limit_judges_each_y_on_its_own_sample(self):
        n = 100
        quantiles = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)

        def records(y_values):
            return [
                RepRecordFactory(rep=r, y=y, z1=float(quantiles[r]), z2_or_w=float(quantiles[(r * 37) % n]))
                for r in range(n)
                for y in y_values
            ]

        thresholds = VerdictThresholds(cov_tol=2.0)
        single = summarize(NormalLimitConfigFactory(verdict=thresholds), records((1.0,)))
        profiled = summarize(NormalLimitConfigFactory(y_values=(0.5, 2.0), verdict=thresholds), records((0.5, 2.0)))
        assert "ks_z1_p" not in profiled.statistics
        for label in ("y=0.5", "y=2"):
            assert profiled.statistics[f"ks_z1_p[{label}]"] == single.statistics["ks_z1_p"]
            assert profiled.statistics[f"cov_z11[{label}]"] == single.statistics["cov_z11"]
        assert {v.name for v in profiled.verdicts} >= {"ks_z2_p[y=0.5]", "ks_z2_p[y=2]"}
        assert profiled.passed

    def test_stable_limit_judges_each_y_on_its_own_sample(self):
        cfg = ExperimentConfigFactory(kind=ExperimentKind.STABLE_LIMIT, spec=ParetoSpecFactory(), y_values=(0.5, 2.0))
        rng = np.random.default_rng(4)
        z1, w = rng.normal(size=(2, 50))
        records = [
            RepRecordFactory(rep=r, y=y, z1=float(z1[r]), z2_or_w=float(w[r]) + y)
            for r in range(50)
            for y in (0.5, 2.0)
        ]
        summary = summarize(cfg, records, reference=rng.normal(size=500))
        assert summary.statistics["median_w[y=2]"] - summary.statistics["median_w[y=0.5]"] == pytest.approx(1.5)
        assert summary.statistics["kendall_tau[y=0.5]"] == pytest.approx(summary.statistics["kendall_tau[y=2]"])

    def test_stable_limit_needs_reference(self):
        cfg = ExperimentConfigFactory(kind=ExperimentKind.STABLE_LIMIT, spec=ParetoSpecFactory())
        with pytest.raises(UsageError):
            summarize(cfg, [RepRecordFactory(rep=0, z2_or_w=0.3)])

    def test_growth(self):
        cfg = GrowthConfigFactory()
        extra = {"cauchy_gap": 1e-9, "growth_rate": cfg.lyapunov, "rate_error": 0.01, "nondegeneracy": 2.0}
        records = [RepRecordFactory(rep=r, extra={**extra, "diverged": 1.0}) for r in range(5)]
        summary = summarize(cfg, records)
        assert summary.statistics["median_cauchy_gap"] == 1e-9
        assert summary.statistics["nondegenerate_fraction"] == 1.0
        assert summary.passed

    def test_likelihood_surface(self):
        cfg = ExperimentConfigFactory(kind=ExperimentKind.LIKELIHOOD_SURFACE)
        records = [
            RepRecordFactory(rep=r, extra={"n_level": float(level), "sup_gap": gap, "y_slice_spread": 1e-4})
            for r in range(3)
            for level, gap in ((50, 0.2), (100, 0.1), (200, 0.04))
        ]
        summary = summarize(cfg, records)
        assert summary.statistics["median_sup_gap[n=200]"] == 0.04
        assert summary.passed

    def test_likelihood_surface_not_decreasing(self):
        cfg = ExperimentConfigFactory(kind=ExperimentKind.LIKELIHOOD_SURFACE)
        records = [
            RepRecordFactory(rep=0, extra={"n_level": float(level), "sup_gap": gap, "y_slice_spread": 0.0})
            for level, gap in ((50, 0.03), (100, 0.04), (200, 0.01))
        ]
        verdicts = {v.name: v for v in summarize(cfg, records).verdicts}
        assert not verdicts["sup_gap_decreasing"].passed

    def test_y_profile(self):
        cfg = ExperimentConfigFactory(kind=ExperimentKind.Y_PROFILE, y_values=(0.5, 2.0))
        extra = {"y_flat_range": 0.001, "x_contrast_range": 0.8, "eta1_spread": 0.0}
        records = [
            RepRecordFactory(rep=r, y=y, z1=0.1 * (r - 2), z2_or_w=0.1 * (r - 2), extra=extra)
            for r in range(5)
            for y in (0.5, 2.0)
        ]
        summary = summarize(cfg, records)
        assert summary.statistics["coverage[y=0.5]"] == 1.0
        assert summary.statistics["covered_count[y=2]"] == 5.0
        assert summary.statistics["median_eta1_spread"] == 0.0
        assert not math.isnan(summary.statistics["ks_z1_p[y=2]"])
