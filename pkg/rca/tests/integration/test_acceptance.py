"""Monte Carlo acceptance bundles on the explosive reference model (phi = 1.5, Gaussian b).

Each bundle runs a full experiment at the sizes the checks are calibrated for
and judges it with the default verdict thresholds.
"""

import math

import numpy as np
import pytest

from rca.services.config_service import parse_config
from rca.services.estimator import EstimatorConfig, SearchRegion, qmle
from rca.services.innovations import SeedStream
from rca.services.likelihood import loglik_grid
from rca.services.montecarlo.config import ExperimentKind, SurfaceLattice
from rca.services.montecarlo.service import run_experiment
from rca.services.process import ModelParams, simulate
from rca.tests.conftest import DETERMINISTIC_CONFIG
from rca.tests.factories import (
    ExperimentConfigFactory,
    GrowthConfigFactory,
    NormalLimitConfigFactory,
    ParetoSpecFactory,
)

THREADS = 4


def _failed(report) -> list[str]:
    return [v.line() for v in report.summary.verdicts if not v.passed]


@pytest.mark.slow
@pytest.mark.integration
class TestSurfaceConvergence:
    """(1/n)(L_n(u) - L_n(theta)) approaches f uniformly on a 9 x 9 x 3 lattice."""

    def test_sup_gap_shrinks(self):
        cfg = ExperimentConfigFactory(
            kind=ExperimentKind.LIKELIHOOD_SURFACE,
            n=8000,
            reps=100,
            surface=SurfaceLattice(1.0, 2.0, 9, 0.5, 2.0, 9, 0.5, 2.0, 3),
            master_seed=101,
        )
        report = run_experiment(cfg, threads=THREADS)
        assert report.passed, _failed(report)
        medians = report.surface.medians
        assert list(medians) == [2000, 4000, 8000]
        assert medians[8000] < 0.05


@pytest.mark.slow
@pytest.mark.integration
class TestConsistency:
    def test_estimates_settle_near_the_truth(self):
        cfg = ExperimentConfigFactory(
            kind=ExperimentKind.CONSISTENCY,
            n=2000,
            reps=200,
            master_seed=151,
            estimator_cfg=EstimatorConfig(grid_s=32, grid_x=32),
        )
        report = run_experiment(cfg, threads=THREADS)
        assert report.failed_reps == 0
        assert report.passed, _failed(report)
        assert report.summary.statistics["consistency_rate"] >= 0.95


@pytest.mark.slow
@pytest.mark.integration
class TestNormalLimit:
    def test_whitened_estimates_are_standard_normal(self):
        cfg = NormalLimitConfigFactory(
            n=2000,
            reps=1000,
            master_seed=202,
            estimator_cfg=EstimatorConfig(grid_s=32, grid_x=32),
        )
        report = run_experiment(cfg, threads=THREADS)
        assert report.failed_reps == 0
        assert report.passed, _failed(report)


@pytest.mark.slow
@pytest.mark.integration
class TestYRobustness:
    def test_any_y_gives_a_normal_phi(self):
        cfg = ExperimentConfigFactory(
            kind=ExperimentKind.Y_PROFILE,
            n=4000,
            reps=500,
            y_values=(0.25, 1.0, 4.0),
            master_seed=303,
            estimator_cfg=EstimatorConfig(grid_s=32, grid_x=32),
        )
        report = run_experiment(cfg, threads=THREADS)
        assert report.passed, _failed(report)
        for y in ("0.25", "1", "4"):
            assert 0.92 < report.summary.statistics[f"coverage[y={y}]"] < 0.975

    def test_sigma_sq_is_not_identified(self):
        cfg = ExperimentConfigFactory(
            kind=ExperimentKind.Y_PROFILE,
            n=8000,
            reps=100,
            master_seed=404,
            estimator_cfg=EstimatorConfig(grid_s=32, grid_x=32),
        )
        report = run_experiment(cfg, threads=THREADS)
        statistics = report.summary.statistics
        assert statistics["median_y_flat_range"] < 0.02
        assert statistics["median_x_contrast_range"] > 0.2


@pytest.mark.slow
@pytest.mark.integration
class TestStableLimit:
    def test_variance_estimate_follows_the_partial_sum_law(self):
        cfg = ExperimentConfigFactory(
            kind=ExperimentKind.STABLE_LIMIT,
            spec=ParetoSpecFactory(alpha=1.5, omega_sq=1.0),
            n=4000,
            reps=1000,
            reference_m=100_000,
            reference_reps=2000,
            master_seed=505,
            estimator_cfg=EstimatorConfig(grid_s=32, grid_x=32),
        )
        report = run_experiment(cfg, threads=THREADS)
        assert report.passed, _failed(report)


@pytest.mark.slow
@pytest.mark.integration
class TestGrowth:
    def test_normalized_path_and_rate(self):
        cfg = GrowthConfigFactory(n=5000, reps=200, master_seed=606)
        assert cfg.lyapunov > 0.2
        report = run_experiment(cfg, threads=THREADS)
        assert report.passed, _failed(report)

    def test_deterministic_closed_forms(self):
        cfg = parse_config(DETERMINISTIC_CONFIG, ["experiment.n = 50"])
        report = run_experiment(cfg)
        (record,) = report.records
        assert record.extra["growth_rate"] == pytest.approx(math.log(2.0), abs=1e-12)
        assert record.extra["cauchy_gap"] == pytest.approx(2.0**-25 - 2.0**-50, abs=1e-12)
        assert record.extra["nondegeneracy"] == pytest.approx(1.0, abs=1e-12)
        assert report.passed, _failed(report)


@pytest.mark.slow
@pytest.mark.integration
class TestOptimizerAudit:
    def test_qmle_beats_a_fine_grid(self, gaussian_spec):
        # Lattice steps below 1e-3 in both coordinates
        region = SearchRegion(1.0, 2.0, 0.25, 2.25)
        s_values, x_values = region.grid(2048, 2048)
        for rep in range(50):
            traj = simulate(ModelParams(phi=1.5), gaussian_spec, 500, SeedStream(707, rep), log_space=True)
            brute = loglik_grid(traj, s_values, x_values, 1.0)
            i, j = np.unravel_index(np.argmax(brute), brute.shape)
            best = float(brute[i, j])

            result = qmle(traj, region)

            assert result.loglik_value >= best - 1e-9 * (1.0 + abs(best)), rep
            assert abs(result.eta1 - s_values[i]) <= 1e-3, rep
            assert abs(result.eta2 - x_values[j]) <= 1e-3, rep
