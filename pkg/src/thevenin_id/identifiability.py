"""Sensitivity matrix, local identifiability and theoretical accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateDesign, SingularInformation
from .model import N_PARAMS, PARAM_NAMES, ThveninParams


@dataclass(frozen=True)
class SensitivityMatrix:
    s: np.ndarray
    times: np.ndarray
    theta_ref: ThveninParams
    current: float


def sensitivity_from_vector(theta, current, t, q_c):
    """Analytic d(voltage)/d(theta) for constant-current discharge from rest, shape (N, 9)."""
    t = np.asarray(t, dtype=float)
    soc = 1.0 + current * t / (3600.0 * q_c)
    soc5 = soc**5
    e_soc = np.exp(-theta[6] * soc)
    e_t = np.exp(-theta[8] * t)
    out = np.empty((t.size, N_PARAMS))
    p = soc.copy()
    for i in range(4):
        out[:, i] = p - soc5
        p = p * soc
    out[:, 4] = current
    out[:, 5] = current * e_soc
    out[:, 6] = -current * soc * theta[5] * e_soc
    out[:, 7] = current * (1.0 - e_t)
    out[:, 8] = current * theta[7] * t * e_t
    return out


def sensitivity(theta: ThveninParams, times, current: float) -> SensitivityMatrix:
    times = np.asarray(times, dtype=float)
    s = sensitivity_from_vector(theta.vector(), current, times, theta.q_c)
    return SensitivityMatrix(s, times, theta, current)


@dataclass(frozen=True)
class RankReport:
    rank: int
    condition_number: float
    smallest_singular_value: float
    singular_values: np.ndarray


def _matrix(s):
    return s.s if isinstance(s, SensitivityMatrix) else np.asarray(s, dtype=float)


def rank_check(s) -> RankReport:
    """Numerical column rank with the usual max(N, n) * eps * sigma_max cut."""
    a = _matrix(s)
    n, m = a.shape
    if n < m:
        raise DegenerateDesign(f"need at least {m} samples, got {n}")
    sv = np.linalg.svd(a, compute_uv=False)
    tol = max(n, m) * np.finfo(float).eps * sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > tol))
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    return RankReport(rank, float(cond), float(sv[-1]), sv)


def information_matrix(s, q) -> np.ndarray:
    """S^T Q^-1 S. ``q`` is a scalar variance or a full (N, N) covariance."""
    a = _matrix(s)
    if np.ndim(q) == 0:
        return a.T @ a / float(q)
    q = np.asarray(q, dtype=float)
    cf = scipy.linalg.cho_factor(q)
    return a.T @ scipy.linalg.cho_solve(cf, a)


def _spd_inverse(m, what="information matrix"):
    m = 0.5 * (m + m.T)
    try:
        cf = scipy.linalg.cho_factor(m)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInformation(f"{what} is not positive definite") from exc
    # Cholesky succeeds on numerically singular matrices too
    d = np.diag(cf[0])
    if d.min() <= np.sqrt(m.shape[0] * np.finfo(float).eps) * d.max():
        raise SingularInformation(f"{what} is numerically singular")
    inv = scipy.linalg.cho_solve(cf, np.eye(m.shape[0]))
    return 0.5 * (inv + inv.T)


def covariance(s, q) -> np.ndarray:
    a = _matrix(s)
    if rank_check(a).rank < a.shape[1]:
        raise SingularInformation("sensitivity matrix is rank deficient")
    return _spd_inverse(information_matrix(a, q))


@dataclass
class AccuracyReport:
    cov: np.ndarray
    sigma: np.ndarray
    variance_term: float
    bias_term: float
    per_param_nrmse_theoretical: np.ndarray
    bias_vector: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    expected_estimate: np.ndarray | None = None
    lam: float | None = None

    @property
    def total(self) -> float:
        return float(np.trace(self.sigma))

    def record(self) -> dict:
        row = {"lambda": self.lam, "variance": self.variance_term, "bias": self.bias_term, "total": self.total}
        for name, v in zip(PARAM_NAMES, self.per_param_nrmse_theoretical):
            row[f"nrmse_{name}"] = float(v)
        return row


def _theta_vec(theta):
    return theta.vector() if isinstance(theta, ThveninParams) else np.asarray(theta, dtype=float)


def theoretical_accuracy_cnls(s, q, theta_true=None) -> AccuracyReport:
    cov = covariance(s, q)
    if theta_true is None:
        theta_true = s.theta_ref
    th = _theta_vec(theta_true)
    return AccuracyReport(
        cov=cov,
        sigma=cov.copy(),
        variance_term=float(np.trace(cov)),
        bias_term=0.0,
        per_param_nrmse_theoretical=np.sqrt(np.diag(cov) / th**2),
        expected_estimate=th.copy(),
    )


def theoretical_accuracy_rnls(s, q, theta_true, theta0, p0, lam=None) -> AccuracyReport:
    """Error decomposition of the ridge-regularized estimator.

    ``p0`` is the prior covariance (diagonal vector or 9x9 diagonal matrix).
    The estimate is pulled toward ``theta0``: its expected value is
    ``theta + M (theta0 - theta)`` with ``M = (I + P0 F)^-1`` and F the Fisher
    information. ``bias_vector`` holds ``E[estimate] - theta``.
    """
    th = _theta_vec(theta_true)
    th0 = np.asarray(theta0, dtype=float)
    p0d = np.diag(p0) if np.ndim(p0) == 2 else np.asarray(p0, dtype=float)
    if np.any(p0d <= 0):
        raise SingularInformation("prior variances must be positive")
    info = information_matrix(s, q)
    cov = _spd_inverse(info + np.diag(1.0 / p0d), "regularized information matrix")
    try:
        bias = np.linalg.solve(np.eye(len(th)) + p0d[:, None] * info, th0 - th)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation("I + P0 F is singular") from exc
    expected = th + bias
    sigma = cov + np.outer(bias, bias)
    return AccuracyReport(
        cov=cov,
        sigma=sigma,
        variance_term=float(np.trace(cov)),
        bias_term=float(bias @ bias),
        per_param_nrmse_theoretical=np.sqrt(np.diag(sigma) / th**2),
        bias_vector=bias,
        expected_estimate=expected,
        lam=lam,
    )


def lambda_sweep(s, q, theta_true, theta0, p0, lambdas) -> list[AccuracyReport]:
    p0d = np.diag(p0) if np.ndim(p0) == 2 else np.asarray(p0, dtype=float)
    reports = []
    for lam in lambdas:
        if lam <= 0:
            raise ValueError("lambda must be positive")
        reports.append(theoretical_accuracy_rnls(s, q, theta_true, theta0, lam * p0d, lam=float(lam)))
    return reports
