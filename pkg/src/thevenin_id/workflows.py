"""Identification and validation workflows built on the model and solver."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptyDataset, NonConstantCurrent
from .identifiability import sensitivity_from_vector
from .model import (
    N_PARAMS,
    CurrentProfile,
    SimState,
    ThveninParams,
    ocv,
    r0,
    simulate_times,
    voltage_from_vector,
)
from .solver import (
    BoxConstraint,
    NlsProblem,
    SolveReport,
    TrustRegionConfig,
    solve_box_constrained,
    solve_regularized,
    solve_unconstrained,
)

METHODS = ("benchmark", "cnls", "rnls")
DEFAULT_NOISE_VARIANCE = 2.5e-5
NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class DischargeDataset:
    times: np.ndarray
    currents: np.ndarray
    voltages: np.ndarray
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    q_c: float = 2.17
    v_oc_min: float = 3.3
    v_oc_max: float = 4.15
    cutoff_voltage: float = 3.2
    soc0: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        i = np.asarray(self.currents, dtype=float)
        v = np.asarray(self.voltages, dtype=float)
        if not (t.shape == i.shape == v.shape) or t.ndim != 1:
            raise ConfigError("times, currents and voltages must be 1-D and equally long")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("times must be strictly increasing")
        if self.noise_variance < 0:
            raise ConfigError("noise variance must be non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "currents", i)
        object.__setattr__(self, "voltages", v)

    def __len__(self):
        return self.times.size

    def is_constant_current(self, rtol=1e-6) -> bool:
        if len(self) == 0:
            return False
        ref = np.median(self.currents)
        return bool(np.all(np.abs(self.currents - ref) <= rtol * abs(ref))) and ref != 0

    @property
    def current(self) -> float:
        return float(np.median(self.currents))

    def profile(self) -> CurrentProfile:
        """Piecewise-constant reading: each sample's current holds until the next sample."""
        return CurrentProfile(self.times - self.times[0], self.currents)

    def params_like(self, theta) -> ThveninParams:
        return ThveninParams.from_vector(theta, self.q_c, self.v_oc_min, self.v_oc_max)


@dataclass(frozen=True)
class PriorSpec:
    initial_guess: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    theta0: np.ndarray
    p0_diag: np.ndarray

    def __post_init__(self):
        for name in ("initial_guess", "lower", "upper", "theta0", "p0_diag"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_PARAMS,):
                raise ConfigError(f"{name} must have {N_PARAMS} entries")
            object.__setattr__(self, name, arr)
        if np.any(self.lower > self.upper):
            raise ConfigError("lower bound above upper bound")
        if np.any(self.initial_guess < self.lower) or np.any(self.initial_guess > self.upper):
            raise ConfigError("initial guess outside the bounds")
        if np.any(~(self.p0_diag > 0)):
            raise ConfigError("prior variances must be positive")

    @property
    def box(self) -> BoxConstraint:
        return BoxConstraint(self.lower, self.upper)

    @classmethod
    def coarse(cls) -> "PriorSpec":
        """The coarse prior knowledge used for both the simulations and the experiment."""
        inf = np.inf
        guess = np.array([1.0, 1.0, 1.0, 1.0, 0.029, 0.4, 40.0, 0.2, 1 / 40])
        return cls(
            initial_guess=guess,
            lower=np.array([-inf, -inf, -inf, -inf, 0.01, 0.0, 0.0, 0.0, 1 / 200]),
            upper=np.array([inf, inf, inf, inf, 0.04, 0.8, 80.0, 0.4, 1.0]),
            theta0=guess.copy(),
            p0_diag=np.array([50.0**2] * 4 + [0.001**2, 0.1**2, 10.0**2, 0.06**2, 0.005**2]),
        )


def build_problem(dataset: DischargeDataset, rtol=1e-6) -> NlsProblem:
    """Whitened residual ``(y - phi(theta)) / sigma`` with its analytic Jacobian.

    Time zero is the start of the discharge, with the cell fully charged and
    rested (no RC voltage).
    """
    if len(dataset) == 0:
        raise EmptyDataset("dataset has no samples")
    if not dataset.is_constant_current(rtol):
        raise NonConstantCurrent("identification needs a constant-current discharge")
    t = dataset.times - dataset.times[0]
    y = dataset.voltages
    current = dataset.current
    # noise-free data: weight as if sigma were 1 uV so any prior stays negligible
    inv_sigma = 1.0 / np.sqrt(max(dataset.noise_variance, NOISE_FLOOR))
    q_c, lo, hi = dataset.q_c, dataset.v_oc_min, dataset.v_oc_max

    def residual(theta):
        return (y - voltage_from_vector(theta, current, t, q_c, lo, hi)) * inv_sigma

    def jacobian(theta):
        return sensitivity_from_vector(theta, current, t, q_c) * -inv_sigma

    return NlsProblem(residual, jacobian, N_PARAMS, t.size)


def derived_quantities(params: ThveninParams) -> dict:
    return {"alpha0": params.alpha0, "alpha5": params.alpha5, "capacitance_f": params.capacitance}


def identify(dataset: DischargeDataset, prior: PriorSpec, method: str = "cnls",
             cfg: TrustRegionConfig | None = None) -> SolveReport:
    problem = build_problem(dataset)
    if method == "benchmark":
        report = solve_unconstrained(problem, prior.initial_guess, cfg)
    elif method == "cnls":
        report = solve_box_constrained(problem, prior.box, prior.initial_guess, cfg)
    elif method == "rnls":
        report = solve_regularized(problem, prior.theta0, prior.p0_diag, prior.initial_guess, cfg)
    else:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    params = dataset.params_like(report.theta_hat)
    with np.errstate(divide="ignore"):
        report.derived = derived_quantities(params)
    return report


def regularized_cost(problem: NlsProblem, theta, theta0, p0_diag) -> float:
    d = np.asarray(theta, dtype=float) - theta0
    return problem.cost(theta) + 0.5 * float(d @ (d / p0_diag))


@dataclass
class ValidationReport:
    rms_voltage_error: float
    max_abs_error: float
    errors: np.ndarray
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    measured: np.ndarray = field(default_factory=lambda: np.empty(0))
    predicted: np.ndarray = field(default_factory=lambda: np.empty(0))
    soc: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def from_series(cls, measured, predicted, **kw):
        measured = np.asarray(measured, dtype=float)
        predicted = np.asarray(predicted, dtype=float)
        err = measured - predicted
        rms = float(np.sqrt(np.mean(err**2))) if err.size else 0.0
        mx = float(np.max(np.abs(err))) if err.size else 0.0
        return cls(rms, mx, err, measured=measured, predicted=predicted, **kw)

    def fraction_within(self, tol) -> float:
        return float(np.mean(np.abs(self.errors) < tol)) if self.errors.size else 1.0


def validate_voltage(params: ThveninParams, dataset: DischargeDataset, v_rc0: float = 0.0) -> ValidationReport:
    """Predict the terminal voltage under the dataset's current and compare."""
    t = dataset.times
    sim = simulate_times(params, dataset.profile(), t, SimState(dataset.soc0, v_rc0, t[0]))
    return ValidationReport.from_series(dataset.voltages, sim.v, times=t, soc=sim.soc)


@dataclass(frozen=True)
class RestPoint:
    """One rest window of an intermittent test."""

    soc: float
    rest_voltage: float
    recovery: float
    current: float
    t_start: float
    t_end: float


def extract_rest_points(dataset: DischargeDataset, min_rest: float = 3600.0,
                        threshold: float = 1e-3) -> list[RestPoint]:
    """Find rest windows (|I| < threshold for at least ``min_rest`` seconds).

    The rest voltage is the last sample of the window. The recovery is that
    voltage minus the last loaded sample before the pause, and ``current`` is
    the load current just before the pause.
    """
    t, i, v = dataset.times, dataset.currents, dataset.voltages
    resting = np.abs(i) < threshold
    soc = dataset.soc0 + dataset.profile().charge(t - t[0]) / (3600.0 * dataset.q_c)
    points = []
    k = 0
    n = t.size
    while k < n:
        if not resting[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and resting[j + 1]:
            j += 1
        if k > 0 and t[j] - t[k - 1] >= min_rest:
            points.append(RestPoint(
                soc=float(soc[k]),
                rest_voltage=float(v[j]),
                recovery=float(v[j] - v[k - 1]),
                current=float(i[k - 1]),
                t_start=float(t[k - 1]),
                t_end=float(t[j]),
            ))
        k = j + 1
    return points


def validate_soc_ocv(params: ThveninParams, soc, rest_voltage) -> ValidationReport:
    """Compare model OCV against rested terminal voltages at the given SoC."""
    soc = np.asarray(soc, dtype=float)
    return ValidationReport.from_series(rest_voltage, ocv(params, soc), soc=soc)


def validate_lumped_resistance(params: ThveninParams, soc, recovery, current) -> ValidationReport:
    """Compare ``recovery / |I|`` against the model's ``R0(SoC) + R``."""
    soc = np.asarray(soc, dtype=float)
    measured = np.asarray(recovery, dtype=float) / np.abs(np.asarray(current, dtype=float))
    return ValidationReport.from_series(measured, r0(params, soc) + params.r, soc=soc)


def coulomb_capacity(dataset: DischargeDataset) -> float:
    """Charge removed over the whole log in ampere-hours.

    Uses the same sample-and-hold reading of the current as the replay.
    """
    span = dataset.times[-1] - dataset.times[0]
    return float(-dataset.profile().charge(span) / 3600.0)


def with_noise_variance(dataset: DischargeDataset, variance: float) -> DischargeDataset:
    return replace(dataset, noise_variance=variance)
