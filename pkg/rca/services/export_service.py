"""CSV and text artifacts written under the output directory.

Numbers use 17 significant digits, ``.`` decimals and LF line endings so a
rerun from ``effective_config`` reproduces the files byte for byte.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings

from rca.exceptions import UsageError

from .config_service import render_config
from .estimator import EstimateResult
from .likelihood import limit_f
from .montecarlo.config import ExperimentConfig
from .montecarlo.service import ExperimentReport, RepRecord, SurfaceScan
from .montecarlo.verdicts import Summary
from .process import Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

TRAJECTORY_FILE = "trajectory.csv"
ESTIMATES_FILE = "estimates.csv"
RECORDS_FILE = "records.csv"
SUMMARY_FILE = "summary.csv"
VERDICT_FILE = "verdict.txt"
SURFACE_FILE = "surface.csv"
SURFACE_GAPS_FILE = "surface_gaps.csv"
LIMIT_F_FILE = "limit_f.csv"
EFFECTIVE_CONFIG_FILE = "effective_config"

RECORD_COLUMNS = [
    "rep",
    "y",
    "eta1",
    "eta2",
    "z1",
    "z2_or_w",
    "failed",
    "reason",
    "stream_index",
    "ci_lo",
    "ci_hi",
    "covered",
    "on_boundary",
]


def _flag(value: bool | None) -> float:
    return math.nan if value is None else float(bool(value))


class ExportService:
    """Writes (and reads back) the artifacts of one CLI run."""

    def __init__(self, out_dir: Path | str | None = None):
        self.out_dir = Path(out_dir) if out_dir is not None else Path(settings.RCA_OUTPUT_DIR)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="")
        logger.info(f"Wrote {path} ({len(frame)} rows)")
        return path

    def _write_text(self, text: str, name: str) -> Path:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info(f"Wrote {path}")
        return path

    def write_effective_config(self, cfg: ExperimentConfig) -> Path:
        return self._write_text(render_config(cfg), EFFECTIVE_CONFIG_FILE)

    def write_trajectory(self, traj: Trajectory) -> Path:
        """``k,x,b,e``; b and e are empty on row 0 and when innovations were not recorded."""
        n = traj.n
        pad = np.full(n + 1, np.nan)
        b = pad.copy()
        e = pad.copy()
        if traj.has_innovations:
            b[1:] = traj.b
            e[1:] = traj.e
        frame = pd.DataFrame({"k": np.arange(n + 1), "x": traj.x, "b": b, "e": e})
        return self._write_frame(frame, TRAJECTORY_FILE)

    def write_estimates(self, results: Sequence[EstimateResult]) -> Path:
        frame = pd.DataFrame(
            {
                "n": [r.n for r in results],
                "y": [r.y for r in results],
                "eta1": [r.eta1 for r in results],
                "eta2": [r.eta2 for r in results],
                "loglik": [r.loglik_value for r in results],
                "grad_norm": [r.grad_norm for r in results],
                "on_boundary": [int(r.on_boundary) for r in results],
            }
        )
        return self._write_frame(frame, ESTIMATES_FILE)

    def write_records(self, records: Iterable[RepRecord]) -> Path:
        records = list(records)
        extra_keys = sorted({key for r in records for key in r.extra})
        rows = []
        for r in records:
            row = {
                "rep": r.rep,
                "y": r.y,
                "eta1": r.eta1,
                "eta2": r.eta2,
                "z1": r.z1,
                "z2_or_w": r.z2_or_w,
                "failed": int(r.failed),
                "reason": r.reason,
                "stream_index": r.stream_index,
                "ci_lo": r.ci_lo,
                "ci_hi": r.ci_hi,
                "covered": _flag(r.covered),
                "on_boundary": int(r.on_boundary),
            }
            row.update({key: r.extra.get(key, math.nan) for key in extra_keys})
            rows.append(row)
        frame = pd.DataFrame(rows, columns=RECORD_COLUMNS + extra_keys)
        return self._write_frame(frame, RECORDS_FILE)

    def write_summary(self, summary: Summary) -> Path:
        frame = pd.DataFrame(
            {"statistic": list(summary.statistics), "value": [float(v) for v in summary.statistics.values()]}
        )
        return self._write_frame(frame, SUMMARY_FILE)

    def write_verdict(self, summary: Summary, cfg: ExperimentConfig) -> Path:
        lines = [f"# {cfg.kind} n={cfg.n} reps={cfg.reps} seed={cfg.master_seed}"]
        lines += [v.line() for v in summary.verdicts]
        lines.append(f"OVERALL {'PASS' if summary.passed else 'FAIL'}")
        return self._write_text("\n".join(lines) + "\n", VERDICT_FILE)

    def write_surface(self, scan: SurfaceScan) -> list[Path]:
        return [self._write_frame(scan.nodes, SURFACE_FILE), self._write_frame(scan.gaps, SURFACE_GAPS_FILE)]

    def write_limit_f(self, cfg: ExperimentConfig) -> Path:
        """f(s, x) on the estimator grid over the region."""
        phi, omega_sq = cfg.truth
        s_values, x_values = cfg.region.grid(cfg.estimator_cfg.grid_s, cfg.estimator_cfg.grid_x)
        rows = [(s, x, limit_f(s, x, phi, omega_sq)) for s in s_values for x in x_values]
        return self._write_frame(pd.DataFrame(rows, columns=["s", "x", "f"]), LIMIT_F_FILE)

    def write_report(self, report: ExperimentReport) -> list[Path]:
        """records.csv, summary.csv, verdict.txt and, for surface runs, the surface tables."""
        paths = [
            self.write_records(report.all_records),
            self.write_summary(report.summary),
            self.write_verdict(report.summary, report.config),
        ]
        if report.surface is not None:
            paths += self.write_surface(report.surface)
        return paths

    def read_records(self) -> list[RepRecord]:
        """Parse ``records.csv`` back into records (exact for values written by ``write_records``)."""
        path = self.out_dir / RECORDS_FILE
        if not path.exists():
            raise UsageError(f"no {RECORDS_FILE} in {self.out_dir}")
        frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=False, na_values=[""])
        missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
        if missing:
            raise UsageError(f"{path} is missing columns: {', '.join(missing)}")
        extra_keys = [c for c in frame.columns if c not in RECORD_COLUMNS]

        records = []
        for row in frame.to_dict(orient="records"):
            covered = row["covered"]
            reason = row["reason"]
            records.append(
                RepRecord(
                    rep=int(row["rep"]),
                    stream_index=int(row["stream_index"]),
                    y=float(row["y"]),
                    eta1=float(row["eta1"]),
                    eta2=float(row["eta2"]),
                    z1=float(row["z1"]),
                    z2_or_w=float(row["z2_or_w"]),
                    ci_lo=float(row["ci_lo"]),
                    ci_hi=float(row["ci_hi"]),
                    covered=None if pd.isna(covered) else bool(covered),
                    on_boundary=bool(row["on_boundary"]),
                    failed=bool(row["failed"]),
                    reason="" if pd.isna(reason) else str(reason),
                    extra={key: float(row[key]) for key in extra_keys if not pd.isna(row[key])},
                )
            )
        return records
