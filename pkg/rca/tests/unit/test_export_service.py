"""Unit tests for ExportService."""

import math

import pandas as pd
import pytest

from rca.exceptions import UsageError
from rca.services.config_service import parse_config
from rca.services.export_service import (
    EFFECTIVE_CONFIG_FILE,
    ESTIMATES_FILE,
    LIMIT_F_FILE,
    RECORD_COLUMNS,
    TRAJECTORY_FILE,
    VERDICT_FILE,
    ExportService,
)
from rca.services.innovations import SeedStream
from rca.services.montecarlo.verdicts import Summary, Verdict
from rca.services.process import ModelParams, simulate
from rca.tests.conftest import BASE_CONFIG
from rca.tests.factories import (
    EstimateResultFactory,
    ExperimentConfigFactory,
    FailedRepRecordFactory,
    RepRecordFactory,
)


class TestExportServiceInit:
    def test_defaults_to_settings(self, rca_output_dir):
        service = ExportService()
        assert service.out_dir == rca_output_dir
        assert rca_output_dir.is_dir()

    def test_explicit_directory(self, tmp_path):
        service = ExportService(tmp_path / "nested" / "out")
        assert service.out_dir.is_dir()


class TestWriteTrajectory:
    def test_deterministic_golden_file(self, deterministic_spec, tmp_path):
        traj = simulate(ModelParams(phi=2.0, x0=0.0), deterministic_spec, 10, SeedStream(0), record_innovations=True)
        path = ExportService(tmp_path).write_trajectory(traj)

        lines = path.read_text().split("\n")
        assert lines[0] == "k,x,b,e"
        assert lines[1] == "0,0,,"
        assert lines[2:5] == ["1,1,0,1", "2,3,0,1", "3,7,0,1"]
        assert lines[11] == "10,1023,0,1"
        assert lines[12] == ""
        assert path.name == TRAJECTORY_FILE

    def test_without_innovations(self, gaussian_spec, tmp_path):
        traj = simulate(ModelParams(phi=1.5), gaussian_spec, 5, SeedStream(0))
        frame = pd.read_csv(ExportService(tmp_path).write_trajectory(traj))
        assert frame["b"].isna().all()
        assert list(frame["k"]) == list(range(6))

    def test_seventeen_significant_digits(self, gaussian_spec, tmp_path):
        traj = simulate(ModelParams(phi=1.5), gaussian_spec, 20, SeedStream(3))
        frame = pd.read_csv(ExportService(tmp_path).write_trajectory(traj), float_precision="round_trip")
        assert frame["x"].tolist() == traj.x.tolist()


class TestWriteEstimates:
    def test_columns_and_rows(self, tmp_path):
        results = [EstimateResultFactory(y=0.5), EstimateResultFactory(y=2.0, on_boundary=True)]
        path = ExportService(tmp_path).write_estimates(results)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["n", "y", "eta1", "eta2", "loglik", "grad_norm", "on_boundary"]
        assert frame["y"].tolist() == [0.5, 2.0]
        assert frame["on_boundary"].tolist() == [0, 1]
        assert path.name == ESTIMATES_FILE


class TestRecords:
    """Tests for write_records() and read_records()."""

    def test_round_trip(self, tmp_path):
        service = ExportService(tmp_path)
        written = [
            RepRecordFactory(rep=0, eta1=1.4999999999999998, extra={"cauchy_gap": 1e-9}),
            RepRecordFactory(rep=1, covered=False),
            FailedRepRecordFactory(rep=2),
        ]
        service.write_records(written)

        read = service.read_records()

        assert [r.rep for r in read] == [0, 1, 2]
        assert read[0].eta1 == 1.4999999999999998
        assert read[0].extra == {"cauchy_gap": 1e-9}
        assert read[1].covered is False
        assert read[1].extra == {}
        assert read[2].failed
        assert read[2].covered is None
        assert math.isnan(read[2].eta1)
        assert read[2].reason == written[2].reason
        assert read[0].reason == ""

    def test_header(self, tmp_path):
        path = ExportService(tmp_path).write_records([RepRecordFactory(extra={"b": 1.0, "a": 2.0})])
        assert path.read_text().split("\n")[0].split(",") == RECORD_COLUMNS + ["a", "b"]

    def test_read_without_file(self, tmp_path):
        with pytest.raises(UsageError):
            ExportService(tmp_path).read_records()


class TestSummaryAndVerdict:
    def test_verdict_file(self, tmp_path):
        cfg = ExperimentConfigFactory(n=200, reps=4, master_seed=3)
        summary = Summary(
            {"consistency_rate": 0.5},
            (
                Verdict("consistency_rate", 0.5, ">= 0.95", False),
                Verdict("records", 4.0, "> 0", True),
            ),
        )
        path = ExportService(tmp_path).write_verdict(summary, cfg)
        assert path.name == VERDICT_FILE
        assert path.read_text() == (
            "# consistency n=200 reps=4 seed=3\n"
            "FAIL consistency_rate = 0.5 (required >= 0.95)\n"
            "PASS records = 4 (required > 0)\n"
            "OVERALL FAIL\n"
        )

    def test_summary_file(self, tmp_path):
        summary = Summary({"mean_z1": 0.1, "records": 3.0}, ())
        frame = pd.read_csv(ExportService(tmp_path).write_summary(summary), float_precision="round_trip")
        assert frame["statistic"].tolist() == ["mean_z1", "records"]
        assert frame["value"].tolist() == [0.1, 3.0]


class TestOtherArtifacts:
    def test_limit_f(self, tmp_path):
        cfg = parse_config(BASE_CONFIG)
        frame = pd.read_csv(ExportService(tmp_path).write_limit_f(cfg))
        assert len(frame) == 24 * 24
        assert (frame["f"] <= 0).all()
        assert (tmp_path / LIMIT_F_FILE).exists()

    def test_effective_config(self, tmp_path):
        cfg = parse_config(BASE_CONFIG)
        path = ExportService(tmp_path).write_effective_config(cfg)
        assert path.name == EFFECTIVE_CONFIG_FILE
        assert parse_config(path.read_text()) == cfg
