"""Subcommand dispatch for ``manage.py rca`` and the mapping of failures to exit codes."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings

from rca.exceptions import ConfigurationError, ExperimentFailure, NumericalError, UsageError

from .config_service import read_config
from .estimator import EstimateResult, profile_over_y, qmle
from .export_service import EFFECTIVE_CONFIG_FILE, ExportService
from .innovations import SeedStream
from .metrics_service import write_metrics
from .montecarlo.config import ExperimentConfig, ExperimentKind
from .montecarlo.service import ExperimentReport, run_experiment, stable_reference
from .montecarlo.verdicts import summarize
from .process import Trajectory, simulate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

SUBCOMMANDS = ("simulate", "estimate", "profile-y", "limit-f", "surface", "mc", "growth", "report")

# Single-path subcommands draw their trajectory from this stream
SINGLE_PATH_STREAM = 0


@dataclass(frozen=True)
class CliInvocation:
    subcommand: str
    config_path: Path | None = None
    overrides: tuple[str, ...] = field(default_factory=tuple)
    out_dir: Path | None = None
    seed: int | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
        if self.config_path is None and self.subcommand != "report":
            raise UsageError(f"{self.subcommand} needs --config")
        if self.threads is not None and self.threads < 1:
            raise UsageError("--threads must be positive")


class Dispatcher:
    """Runs one invocation end to end: parse, echo the effective config, compute, write."""

    def __init__(self, inv: CliInvocation):
        self.inv = inv
        self.export = ExportService(inv.out_dir)
        self.threads = inv.threads or settings.RCA_THREADS

    def _load(self) -> ExperimentConfig:
        overrides = list(self.inv.overrides)
        if self.inv.seed is not None:
            overrides.append(f"experiment.seed = {self.inv.seed}")
        path = self.inv.config_path or self.export.out_dir / EFFECTIVE_CONFIG_FILE
        return read_config(path, overrides)

    def _single_path(self, cfg: ExperimentConfig, record_innovations: bool = False) -> Trajectory:
        stream = SeedStream(cfg.master_seed, SINGLE_PATH_STREAM)
        return simulate(
            cfg.params, cfg.spec, cfg.n, stream, record_innovations=record_innovations, log_space=cfg.log_space
        )

    def _verdict_code(self, passed: bool) -> int:
        return EXIT_OK if passed else EXIT_CHECK_FAILED

    def _write_experiment(self, report: ExperimentReport):
        self.export.write_report(report)
        write_metrics(report, self.export.out_dir)

    def simulate(self, cfg: ExperimentConfig) -> int:
        self.export.write_trajectory(self._single_path(cfg, record_innovations=True))
        return EXIT_OK

    def estimate(self, cfg: ExperimentConfig) -> int:
        traj = self._single_path(cfg)
        results: list[EstimateResult] = [qmle(traj, cfg.region, y, cfg.estimator_cfg) for y in cfg.y_values]
        self.export.write_estimates(results)
        return EXIT_OK

    def profile_y(self, cfg: ExperimentConfig) -> int:
        traj = self._single_path(cfg)
        self.export.write_estimates(profile_over_y(traj, cfg.region, cfg.y_values, cfg.estimator_cfg))
        return EXIT_OK

    def limit_f(self, cfg: ExperimentConfig) -> int:
        self.export.write_limit_f(cfg)
        return EXIT_OK

    def _experiment(self, cfg: ExperimentConfig, required: ExperimentKind | None = None) -> int:
        if required is not None and cfg.kind is not required:
            raise UsageError(f"{self.inv.subcommand} needs experiment.kind = {required}, got {cfg.kind}")
        try:
            report = run_experiment(cfg, threads=self.threads)
        except ExperimentFailure as e:
            if e.report is not None:
                self._write_experiment(e.report)
            raise
        self._write_experiment(report)
        return self._verdict_code(report.passed)

    def mc(self, cfg: ExperimentConfig) -> int:
        return self._experiment(cfg)

    def surface(self, cfg: ExperimentConfig) -> int:
        return self._experiment(cfg, ExperimentKind.LIKELIHOOD_SURFACE)

    def growth(self, cfg: ExperimentConfig) -> int:
        return self._experiment(cfg, ExperimentKind.GROWTH)

    def report(self, cfg: ExperimentConfig) -> int:
        """Recompute summary.csv and verdict.txt from records.csv."""
        records = self.export.read_records()
        reference = stable_reference(cfg) if cfg.kind is ExperimentKind.STABLE_LIMIT else None
        summary = summarize(cfg, records, reference)
        self.export.write_summary(summary)
        self.export.write_verdict(summary, cfg)
        return self._verdict_code(summary.passed)

    def run(self) -> int:
        handlers: dict[str, Callable[[ExperimentConfig], int]] = {
            "simulate": self.simulate,
            "estimate": self.estimate,
            "profile-y": self.profile_y,
            "limit-f": self.limit_f,
            "surface": self.surface,
            "mc": self.mc,
            "growth": self.growth,
            "report": self.report,
        }
        cfg = self._load()
        if self.inv.subcommand != "report":
            self.export.write_effective_config(cfg)
        logger.info(f"Running {self.inv.subcommand} ({cfg.kind}, n={cfg.n}) into {self.export.out_dir}")
        return handlers[self.inv.subcommand](cfg)


def dispatch(inv: CliInvocation) -> int:
    """Run ``inv`` and return its exit code.

    0 success; 1 an acceptance check failed; 2 usage or configuration error
    (including a missing config file); 3 numerical failure, including an
    experiment with too many failed replications.
    """
    try:
        return Dispatcher(inv).run()
    except (ConfigurationError, UsageError) as e:
        logger.error(f"{inv.subcommand}: {e}")
        return EXIT_USAGE
    except (NumericalError, ExperimentFailure) as e:
        logger.error(f"{inv.subcommand}: numerical failure: {e}")
        return EXIT_NUMERICAL
