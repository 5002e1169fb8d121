"""Prometheus textfile metrics for one experiment report.

Builds a fresh CollectorRegistry per report and writes it as ``metrics.prom``
(node-exporter textfile-collector format) next to the CSV artifacts.
"""

from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from prometheus_client import CollectorRegistry, Gauge, write_to_textfile

from rca.services.montecarlo.service import ExperimentReport

try:
    _APP_VERSION = version("rca-qmle")
except PackageNotFoundError:
    _APP_VERSION = "unknown"

METRICS_FILE = "metrics.prom"

EXPERIMENT_LABELS = ("kind",)


def build_registry(report: ExperimentReport) -> CollectorRegistry:
    """Return a CollectorRegistry describing ``report``."""
    registry = CollectorRegistry()
    kind = str(report.config.kind)

    info = Gauge(
        "rca_info",
        "rca-qmle build information.",
        ("version",),
        registry=registry,
    )
    info.labels(version=_APP_VERSION).set(1)

    replications = Gauge(
        "rca_replications",
        "Replications of the experiment by outcome.",
        (*EXPERIMENT_LABELS, "status"),
        registry=registry,
    )
    wall_time = Gauge(
        "rca_experiment_wall_time_seconds",
        "Wall-clock duration of the experiment.",
        EXPERIMENT_LABELS,
        registry=registry,
    )
    started = Gauge(
        "rca_experiment_started_timestamp_seconds",
        "Unix timestamp at which the experiment started.",
        EXPERIMENT_LABELS,
        registry=registry,
    )
    passed = Gauge(
        "rca_experiment_passed",
        "1 if every acceptance check passed, 0 otherwise.",
        EXPERIMENT_LABELS,
        registry=registry,
    )
    # Verdict and statistic names contain brackets; keep them as label values, not metric names.
    verdict = Gauge(
        "rca_verdict_passed",
        "1 if the named acceptance check passed, 0 otherwise.",
        (*EXPERIMENT_LABELS, "check"),
        registry=registry,
    )
    verdict_value = Gauge(
        "rca_verdict_value",
        "Observed value of the named acceptance check.",
        (*EXPERIMENT_LABELS, "check"),
        registry=registry,
    )
    statistic = Gauge(
        "rca_summary_statistic",
        "Summary statistic of the replication records.",
        (*EXPERIMENT_LABELS, "statistic"),
        registry=registry,
    )

    failed = report.failed_reps
    replications.labels(kind=kind, status="ok").set(report.config.reps - failed)
    replications.labels(kind=kind, status="failed").set(failed)
    wall_time.labels(kind=kind).set(report.wall_time)
    started.labels(kind=kind).set(report.started_at.timestamp())
    passed.labels(kind=kind).set(1 if report.passed else 0)

    for v in report.summary.verdicts:
        verdict.labels(kind=kind, check=v.name).set(1 if v.passed else 0)
        verdict_value.labels(kind=kind, check=v.name).set(float(v.value))
    for name, value in report.summary.statistics.items():
        statistic.labels(kind=kind, statistic=name).set(float(value))

    return registry


def write_metrics(report: ExperimentReport, out_dir: Path | str) -> Path:
    path = Path(out_dir) / METRICS_FILE
    write_to_textfile(str(path), build_registry(report))
    return path
