"""Unit tests for the replication engine."""

import math
from datetime import UTC, datetime

import numpy as np
import pytest
from freezegun import freeze_time

from rca.exceptions import ConfigurationError, ExperimentFailure, NumericalError, UsageError
from rca.services.montecarlo import service
from rca.services.montecarlo.config import ExperimentKind, SurfaceLattice
from rca.services.montecarlo.service import (
    REFERENCE_STREAM_INDEX,
    likelihood_surface_scan,
    n_ladder,
    run_experiment,
    run_replication,
    stable_reference,
)
from rca.tests.factories import (
    ExperimentConfigFactory,
    GrowthConfigFactory,
    NormalLimitConfigFactory,
    ParetoSpecFactory,
)


def _failing_rep(failing: set[int]):
    original = service._simulate_rep

    def simulate_rep(cfg, rep, record_innovations=False):
        if rep in failing:
            raise NumericalError("non-finite trajectory value near k=3")
        return original(cfg, rep, record_innovations)

    return simulate_rep


class TestExperimentConfig:
    def test_rejects_single_digit_n(self):
        with pytest.raises(ConfigurationError) as exc:
            ExperimentConfigFactory(n=5)
        assert exc.value.field == "experiment.n"

    def test_stable_limit_needs_pareto(self):
        with pytest.raises(ConfigurationError) as exc:
            ExperimentConfigFactory(kind=ExperimentKind.STABLE_LIMIT)
        assert exc.value.field == "innov.variant"

    def test_strict_gate_when_y_differs_from_sigma_sq(self):
        cfg = ExperimentConfigFactory(y_values=(0.5, 2.0))
        assert cfg.lyapunov > 0

    def test_surface_defaults_to_region(self):
        cfg = ExperimentConfigFactory()
        assert cfg.surface == SurfaceLattice.over(cfg.region)


class TestNLadder:
    def test_quarters(self):
        assert n_ladder(400) == [100, 200, 400]

    def test_small_n(self):
        assert n_ladder(10) == [2, 5, 10]


class TestRunReplication:
    """Tests for run_replication()."""

    def test_one_record_per_y(self):
        cfg = ExperimentConfigFactory(y_values=(0.5, 1.0, 2.0))
        records = run_replication(cfg, 2)
        assert [r.y for r in records] == [0.5, 1.0, 2.0]
        assert all(r.rep == r.stream_index == 2 for r in records)
        assert all(r.ci_lo < r.eta1 < r.ci_hi for r in records)
        assert all(isinstance(r.covered, bool) for r in records)

    def test_depends_only_on_config_and_rep(self):
        cfg = ExperimentConfigFactory()
        first = run_replication(cfg, 1)[0]
        again = run_replication(cfg, 1)[0]
        other = run_replication(cfg, 2)[0]
        assert (first.eta1, first.eta2, first.z1) == (again.eta1, again.eta2, again.z1)
        assert first.eta1 != other.eta1

    def test_normal_limit_statistics(self):
        cfg = NormalLimitConfigFactory()
        (record,) = run_replication(cfg, 0)
        assert math.isfinite(record.z1)
        assert math.isfinite(record.z2_or_w)
        assert record.z1 == pytest.approx(math.sqrt(cfg.n) * (record.eta1 - 1.5))

    def test_numerical_failure_becomes_a_record(self, mocker):
        mocker.patch.object(service, "_simulate_rep", side_effect=_failing_rep({0}))
        (record,) = run_replication(ExperimentConfigFactory(), 0)
        assert record.failed
        assert record.reason.startswith("NumericalError")
        assert math.isnan(record.eta1)

    def test_growth_record(self):
        cfg = GrowthConfigFactory(n=200)
        (record,) = run_replication(cfg, 0)
        assert set(record.extra) == {"cauchy_gap", "growth_rate", "rate_error", "nondegeneracy", "diverged"}
        assert record.extra["diverged"] == 1.0
        assert record.extra["cauchy_gap"] < 1e-6
        assert record.extra["rate_error"] == pytest.approx(abs(record.extra["growth_rate"] - cfg.lyapunov))

    def test_y_profile_records(self):
        cfg = ExperimentConfigFactory(kind=ExperimentKind.Y_PROFILE, y_values=(0.5, 1.0, 2.0))
        records = run_replication(cfg, 0)
        assert len(records) == 3
        for record in records:
            assert record.z2_or_w == pytest.approx(math.sqrt(cfg.n) * (record.eta1 - 1.5) / math.sqrt(record.eta2))
            assert record.extra["y_flat_range"] < record.extra["x_contrast_range"]


class TestRunExperiment:
    """Tests for run_experiment()."""

    def test_thread_count_does_not_change_the_report(self):
        cfg = ExperimentConfigFactory(reps=6)
        single = run_experiment(cfg, threads=1)
        pooled = run_experiment(cfg, threads=3)
        assert [(r.rep, r.eta1, r.eta2) for r in single.records] == [(r.rep, r.eta1, r.eta2) for r in pooled.records]
        assert single.summary == pooled.summary

    @freeze_time("2026-05-04 10:30:00")
    def test_started_at(self):
        report = run_experiment(ExperimentConfigFactory(reps=2))
        assert report.started_at == datetime(2026, 5, 4, 10, 30, tzinfo=UTC)

    def test_records_are_sorted(self):
        report = run_experiment(ExperimentConfigFactory(reps=5, y_values=(2.0, 0.5)), threads=2)
        keys = [(r.rep, r.y) for r in report.records]
        assert keys == sorted(keys)

    def test_too_many_failures(self, mocker):
        mocker.patch.object(service, "_simulate_rep", side_effect=_failing_rep({0}))
        cfg = ExperimentConfigFactory(reps=4, max_failed_fraction=0.0)
        with pytest.raises(ExperimentFailure) as exc:
            run_experiment(cfg)
        report = exc.value.report
        assert report is not None
        assert [r.rep for r in report.failures] == [0]
        assert len(report.records) == 3

    def test_tolerated_failures(self, mocker):
        mocker.patch.object(service, "_simulate_rep", side_effect=_failing_rep({1}))
        report = run_experiment(ExperimentConfigFactory(reps=4, max_failed_fraction=0.5))
        assert report.failed_reps == 1
        assert report.summary.statistics["reps_failed"] == 1.0
        assert [r.rep for r in report.all_records] == [0, 1, 2, 3]

    def test_stable_limit_reference(self):
        cfg = ExperimentConfigFactory(
            kind=ExperimentKind.STABLE_LIMIT,
            spec=ParetoSpecFactory(),
            reps=3,
            reference_m=200,
            reference_reps=50,
        )
        report = run_experiment(cfg)
        assert report.reference.shape == (50,)
        np.testing.assert_array_equal(report.reference, stable_reference(cfg))
        assert "ks_w_p" in report.summary.statistics
        assert REFERENCE_STREAM_INDEX > cfg.reps

    def test_growth_experiment(self):
        report = run_experiment(GrowthConfigFactory(n=200, reps=3))
        assert len(report.records) == 3
        assert report.summary.statistics["divergence_fraction"] == 1.0


class TestLikelihoodSurface:
    def _config(self, **kwargs):
        lattice = SurfaceLattice(1.0, 2.0, 3, 0.5, 1.5, 3, 0.5, 2.0, 2)
        return ExperimentConfigFactory(kind=ExperimentKind.LIKELIHOOD_SURFACE, n=40, reps=2, surface=lattice, **kwargs)

    def test_scan_tables(self):
        scan = likelihood_surface_scan(self._config())
        assert len(scan.nodes) == 2 * 3 * 3 * 3 * 2
        assert len(scan.gaps) == 2 * 3
        assert sorted(scan.medians) == [10, 20, 40]
        assert (scan.gaps["sup_gap"] >= 0).all()

    @pytest.mark.parametrize("kind", [ExperimentKind.CONSISTENCY, ExperimentKind.GROWTH])
    def test_scan_needs_surface_kind(self, kind):
        cfg = ExperimentConfigFactory(kind=kind, n=40, reps=2)
        with pytest.raises(UsageError, match="likelihood_surface"):
            likelihood_surface_scan(cfg)

    def test_few_replications_warn(self, mocker):
        mock_logger = mocker.patch.object(service, "logger")
        likelihood_surface_scan(self._config())
        assert "may flake" in mock_logger.warning.call_args.args[0]

    def test_truth_node_matches_f(self):
        scan = likelihood_surface_scan(self._config())
        truth = scan.nodes[(scan.nodes.s == 1.5) & (scan.nodes.x == 1.0) & (scan.nodes.y == 2.0)]
        assert len(truth) == 2 * 3
        assert (truth["f"] == 0.0).all()

    def test_experiment_report(self):
        report = run_experiment(self._config(), threads=2)
        assert report.surface is not None
        assert len(report.records) == 6
        assert "median_sup_gap[n=40]" in report.summary.statistics
