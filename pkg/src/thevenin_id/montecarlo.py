"""Monte Carlo accuracy study for the three estimators."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, StudyFailed
from .identifiability import (
    AccuracyReport,
    sensitivity,
    theoretical_accuracy_cnls,
    theoretical_accuracy_rnls,
)
from .model import N_PARAMS, ThveninParams, nominal_params
from .solver import TrustRegionConfig
from .synthetic import constant_discharge
from .workflows import METHODS, DEFAULT_NOISE_VARIANCE, DischargeDataset, PriorSpec, identify

log = logging.getLogger(__name__)

HIST_BINS = 30
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class Experiment:
    current: float = -3.0
    duration: float = 2400.0
    dt: float = 1.0
    q_c: float = 2.17
    v_oc_min: float = 3.3
    v_oc_max: float = 4.15
    cutoff_voltage: float = 3.2

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(int(np.floor(self.duration / self.dt + 1e-9)) + 1)


@dataclass(frozen=True)
class McConfig:
    runs: int = 500
    seed: int = 0
    true_theta: tuple = tuple(nominal_params().vector())
    experiment: Experiment = field(default_factory=Experiment)
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    methods: tuple = ("benchmark", "cnls", "rnls")
    prior: PriorSpec = field(default_factory=PriorSpec.coarse)
    solver: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.experiment.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.noise_variance < 0:
            raise ConfigError("noise variance must be non-negative")
        if len(self.true_theta) != N_PARAMS:
            raise ConfigError(f"true_theta needs {N_PARAMS} entries")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods: {sorted(bad)}")

    @property
    def truth(self) -> ThveninParams:
        e = self.experiment
        return ThveninParams.from_vector(self.true_theta, e.q_c, e.v_oc_min, e.v_oc_max)


def generate_dataset(cfg: McConfig, run_index: int) -> DischargeDataset:
    e = cfg.experiment
    return constant_discharge(
        cfg.truth, e.current, e.duration, e.dt, cfg.noise_variance,
        seed=cfg.seed, run_index=run_index, cutoff_voltage=e.cutoff_voltage,
    )


def nrmse(estimates, truth) -> np.ndarray:
    """Per-parameter root-mean-square error normalised by the true value."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float)
    return np.sqrt(np.mean((est - truth) ** 2, axis=0) / truth**2)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


@dataclass
class MethodSummary:
    method: str
    estimates: np.ndarray
    run_indices: np.ndarray
    wall_times: np.ndarray
    iterations: np.ndarray
    failures: list[int]
    nrmse: np.ndarray
    covariance: np.ndarray
    histograms: list[Histogram]

    @property
    def mean_wall_time(self) -> float:
        return float(np.mean(self.wall_times)) if self.wall_times.size else float("nan")


@dataclass
class McReport:
    config: McConfig
    methods: dict[str, MethodSummary]
    theoretical: dict[str, AccuracyReport]


def _histograms(est: np.ndarray) -> list[Histogram]:
    out = []
    for j in range(est.shape[1]):
        col = est[:, j]
        if col.size == 0:
            out.append(Histogram(np.zeros(HIST_BINS + 1), np.zeros(HIST_BINS, dtype=int)))
            continue
        counts, edges = np.histogram(col, bins=HIST_BINS, range=(col.min(), col.max()))
        out.append(Histogram(edges, counts))
    return out


def _run_one(cfg: McConfig, k: int) -> dict:
    data = generate_dataset(cfg, k)
    out = {}
    for method in cfg.methods:
        try:
            rep = identify(data, cfg.prior, method, cfg.solver)
        except NumericalError as exc:
            log.warning("run %d, %s failed: %s", k, method, exc)
            out[method] = None
            continue
        out[method] = (rep.theta_hat, rep.wall_time, rep.iterations)
    return out


def _summarise(method, rows, truth) -> MethodSummary:
    ok = [(k, r) for k, r in rows if r is not None]
    failures = [k for k, r in rows if r is None]
    est = np.array([r[0] for _, r in ok]).reshape(-1, N_PARAMS)
    cov = np.cov(est, rowvar=False, bias=True) if len(ok) > 1 else np.zeros((N_PARAMS, N_PARAMS))
    return MethodSummary(
        method=method,
        estimates=est,
        run_indices=np.array([k for k, _ in ok], dtype=int),
        wall_times=np.array([r[1] for _, r in ok]),
        iterations=np.array([r[2] for _, r in ok], dtype=int),
        failures=failures,
        nrmse=nrmse(est, truth) if len(ok) else np.full(N_PARAMS, np.nan),
        covariance=cov,
        histograms=_histograms(est),
    )


def theoretical_reports(cfg: McConfig) -> dict[str, AccuracyReport]:
    e = cfg.experiment
    s = sensitivity(cfg.truth, e.times, e.current)
    q = cfg.noise_variance
    if q == 0:
        return {}
    return {
        "cnls": theoretical_accuracy_cnls(s, q),
        "rnls": theoretical_accuracy_rnls(s, q, cfg.truth, cfg.prior.theta0, cfg.prior.p0_diag),
    }


def run_study(cfg: McConfig) -> McReport:
    """Generate ``cfg.runs`` datasets and identify each with every requested method.

    Runs are independent; results are reduced in run order so the report does
    not depend on worker scheduling.
    """
    indices = range(cfg.runs)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_one, [cfg] * cfg.runs, indices, chunksize=max(1, cfg.runs // (4 * cfg.workers))))
    else:
        results = [_run_one(cfg, k) for k in indices]

    truth = np.asarray(cfg.true_theta, dtype=float)
    methods = {}
    for method in cfg.methods:
        rows = [(k, res[method]) for k, res in zip(indices, results)]
        summary = _summarise(method, rows, truth)
        if len(summary.failures) > MAX_FAILURE_FRACTION * cfg.runs:
            raise StudyFailed(f"{method}: {len(summary.failures)} of {cfg.runs} runs failed")
        if summary.failures:
            log.info("%s: excluded %d failed runs", method, len(summary.failures))
        methods[method] = summary
    return McReport(cfg, methods, theoretical_reports(cfg))


def timing_comparison(cfg: McConfig, min_runs: int = 20) -> dict[str, float]:
    """Mean wall time per method. Only the ordering is meaningful across machines."""
    if cfg.runs < min_runs:
        raise ConfigError(f"timing needs at least {min_runs} runs")
    report = run_study(cfg)
    return {m: s.mean_wall_time for m, s in report.methods.items()}
