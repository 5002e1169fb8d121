"""Shared fixtures for rca tests."""

import pytest

from rca.services.estimator import EstimatorConfig, SearchRegion
from rca.services.innovations import BVariant, ELaw, InnovationSpec, SeedStream
from rca.services.process import ModelParams, simulate

# phi = 1.5 is explosive for standard Gaussian b; phi = 1 is not (E log|1 + b| < 0)
REFERENCE_PHI = 1.5

BASE_CONFIG = """\
# consistency run on the reference model
experiment.kind = consistency
experiment.n = 200
experiment.reps = 3
experiment.seed = 7

model.phi = 1.5

innov.variant = GaussianBGaussianE
innov.omega_sq = 1
innov.sigma_sq = 1

region.s_lo = 0.5
region.s_hi = 2.5
region.x_lo = 0.25
region.x_hi = 4

estimator.grid_s = 24
estimator.grid_x = 24
"""

DETERMINISTIC_CONFIG = """\
experiment.kind = growth
experiment.n = 10
experiment.reps = 1

model.phi = 2
model.x0 = 0

innov.variant = PointMassB
innov.b_point = 0
innov.e_law = PointMass(1)

region.s_lo = 0
region.s_hi = 3
region.x_lo = 0.01
region.x_hi = 4
"""


@pytest.fixture(autouse=True)
def rca_output_dir(settings, tmp_path):
    """Point RCA_OUTPUT_DIR at a temporary directory."""
    out = tmp_path / "output"
    settings.RCA_OUTPUT_DIR = out
    settings.RCA_THREADS = 1
    return out


@pytest.fixture
def gaussian_spec():
    return InnovationSpec(variant=BVariant.GAUSSIAN, omega_sq=1.0, sigma_sq=1.0)


@pytest.fixture
def pareto_spec():
    return InnovationSpec(variant=BVariant.PARETO_TAIL, omega_sq=1.0, sigma_sq=1.0, alpha=1.5)


@pytest.fixture
def deterministic_spec():
    """b = 0 and e = 1 almost surely."""
    return InnovationSpec(variant=BVariant.POINT_MASS, b_point=0.0, e_law=ELaw("PointMass", 1.0))


@pytest.fixture
def reference_region():
    return SearchRegion(0.5, 2.5, 0.25, 4.0)


@pytest.fixture
def fast_estimator():
    return EstimatorConfig(grid_s=24, grid_x=24)


@pytest.fixture
def gaussian_path(gaussian_spec):
    """Explosive Gaussian path, n = 500, innovations recorded."""
    return simulate(
        ModelParams(phi=REFERENCE_PHI),
        gaussian_spec,
        500,
        SeedStream(11, 0),
        record_innovations=True,
        log_space=True,
    )


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "experiment.cfg"
    path.write_text(BASE_CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def deterministic_config_file(tmp_path):
    path = tmp_path / "deterministic.cfg"
    path.write_text(DETERMINISTIC_CONFIG, encoding="utf-8")
    return path
