"""Monte Carlo error aggregation and report export.

A metrics report holds per-scan RMSE curves for ground range, bearing and
each of the four used heights of every tracked target, aggregated over the
completed runs of an experiment.  Exports are a CSV (one row per scan) and
a plain-text summary with aggregate means and improvement ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

METRIC_KEYS = (
    "range_km",
    "bearing_rad",
    "hE_it_km",
    "hE_ir_km",
    "hF_it_km",
    "hF_ir_km",
)


def compute_rmse(errors: np.ndarray) -> np.ndarray:
    """Root-mean-square over the leading (run) axis, NaN entries excluded.

    ``errors`` has shape (runs, ...); the result drops the run axis.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.shape[0] < 1:
        raise ValueError("need at least one run")
    with np.errstate(invalid="ignore"):
        return np.sqrt(np.nanmean(np.square(errors), axis=0))


def improvement_ratio(reference: float, value: float) -> float:
    """(ref - value) / ref: positive when ``value`` improves on the reference."""
    return (reference - value) / reference


@dataclass
class MetricsReport:
    """Per-scan RMSE of one experiment.

    ``rmse[key]`` has shape (num_scans, num_targets) for each key in
    METRIC_KEYS; ``target_ids`` are 1-based labels for the report columns.
    """

    case: int
    kappa: int
    runs_requested: int
    runs_completed: int
    excluded_runs: int
    seed: int
    scans: np.ndarray
    target_ids: List[int]
    rmse: Dict[str, np.ndarray]
    prior_std_e_km: Optional[float] = None
    prior_std_f_km: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def aggregate_mean(self, key: str) -> float:
        return float(np.nanmean(self.rmse[key]))

    def layer_mean(self, layer: str) -> float:
        """Mean used-height RMSE of one layer over scans, targets and both legs."""
        keys = ("hE_it_km", "hE_ir_km") if layer == "E" else ("hF_it_km", "hF_ir_km")
        return float(np.nanmean([self.rmse[k] for k in keys]))


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def csv_header(target_ids: Sequence[int]) -> List[str]:
    cols = ["scan", "run_count"]
    for tid in target_ids:
        cols.extend(f"t{tid}_rmse_{key}" for key in METRIC_KEYS)
    return cols


def export_csv(report: MetricsReport, path) -> None:
    """One row per scan: scan, run_count, then six RMSE columns per target."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(report.target_ids))
        for i, scan in enumerate(report.scans):
            row = [str(int(scan)), str(report.runs_completed)]
            for j in range(len(report.target_ids)):
                row.extend(_fmt(report.rmse[key][i, j]) for key in METRIC_KEYS)
            writer.writerow(row)


def load_csv(path):
    """Parse an exported metrics CSV back into (scans, run_count, rmse dict)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    n_targets = (len(header) - 2) // len(METRIC_KEYS)
    scans = np.array([int(r[0]) for r in data])
    run_count = int(data[0][1]) if data else 0
    rmse = {}
    for k, key in enumerate(METRIC_KEYS):
        rmse[key] = np.array(
            [[float(r[2 + j * len(METRIC_KEYS) + k]) for j in range(n_targets)] for r in data]
        )
    return scans, run_count, rmse


def export_summary(
    report: MetricsReport, path, reference: Optional[MetricsReport] = None
) -> None:
    """Aggregate means, improvement ratios and run bookkeeping as plain text."""
    lines = [
        f"case: {report.case}",
        f"kappa: {report.kappa}",
        f"runs_requested: {report.runs_requested}",
        f"runs_completed: {report.runs_completed}",
        f"excluded_runs: {report.excluded_runs}",
        f"seed: {report.seed}",
    ]
    for key in METRIC_KEYS:
        lines.append(f"mean_rmse_{key}: {_fmt(report.aggregate_mean(key))}")
    for layer, std in (("E", report.prior_std_e_km), ("F", report.prior_std_f_km)):
        mean = report.layer_mean(layer)
        lines.append(f"mean_rmse_layer_{layer}_km: {_fmt(mean)}")
        if std:
            ratio = improvement_ratio(std, mean)
            lines.append(f"improvement_vs_prior_std_layer_{layer}: {_fmt(ratio)}")
    if reference is not None:
        for key in METRIC_KEYS:
            ratio = improvement_ratio(reference.aggregate_mean(key), report.aggregate_mean(key))
            lines.append(f"improvement_vs_case{reference.case}_{key}: {_fmt(ratio)}")
    for note in report.notes:
        lines.append(f"note: {note}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
