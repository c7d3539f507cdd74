"""Plot-ready CSV tables for study and analysis results."""

from __future__ import annotations

from pathlib import Path

from .fileio import write_csv
from .identifiability import AccuracyReport
from .model import PARAM_NAMES
from .montecarlo import McReport


def write_mc_report(report: McReport, out_dir) -> list[Path]:
    """Write ``nrmse.csv``, ``estimates.csv``, ``histogram_<param>.csv``, ``timing.csv`` and ``theoretical.csv``.

    Everything except ``timing.csv`` is a deterministic function of the config and seed.
    """
    out = Path(out_dir)
    paths = []

    p = out / "nrmse.csv"
    write_csv(p, ("method", *PARAM_NAMES, "runs_used", "runs_failed"),
              ((m, *s.nrmse, len(s.estimates), len(s.failures)) for m, s in report.methods.items()))
    paths.append(p)

    rows = []
    for m, s in report.methods.items():
        rows += [(m, k, *est) for k, est in zip(s.run_indices, s.estimates)]
    p = out / "estimates.csv"
    write_csv(p, ("method", "run", *PARAM_NAMES), rows)
    paths.append(p)

    for j, name in enumerate(PARAM_NAMES):
        rows = []
        for m, s in report.methods.items():
            h = s.histograms[j]
            rows += [(m, lo, hi, c) for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts)]
        p = out / f"histogram_{name}.csv"
        write_csv(p, ("method", "bin_left", "bin_right", "count"), rows)
        paths.append(p)

    p = out / "timing.csv"
    write_csv(p, ("method", "mean_wall_time_ms", "runs"),
              ((m, 1e3 * s.mean_wall_time, len(s.wall_times)) for m, s in report.methods.items()))
    paths.append(p)

    p = out / "theoretical.csv"
    write_accuracy_table(p, report.theoretical)
    paths.append(p)
    return paths


def write_accuracy_table(path, reports: dict[str, AccuracyReport]):
    write_csv(path, ("method", "variance_term", "bias_term", "trace_sigma", *PARAM_NAMES),
              ((m, r.variance_term, r.bias_term, r.total, *r.per_param_nrmse_theoretical)
               for m, r in reports.items()))


def write_lambda_sweep(path, reports: list[AccuracyReport]):
    write_csv(path, ("lambda", "variance", "bias", "total", *(f"nrmse_{n}" for n in PARAM_NAMES)),
              ((r.lam, r.variance_term, r.bias_term, r.total, *r.per_param_nrmse_theoretical) for r in reports))
