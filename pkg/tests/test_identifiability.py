import numpy as np
import pytest

from thevenin_id.errors import DegenerateDesign, SingularInformation
from thevenin_id.identifiability import (
    covariance,
    information_matrix,
    lambda_sweep,
    rank_check,
    sensitivity,
    theoretical_accuracy_cnls,
    theoretical_accuracy_rnls,
)
from thevenin_id.model import ThveninParams, voltage_constant_current
from thevenin_id.workflows import PriorSpec

Q = 2.5e-5


def fd_sensitivity(params, t, current, rel=1e-6):
    theta = params.vector()
    cols = []
    for j in range(theta.size):
        h = rel * max(abs(theta[j]), 1e-3)
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        vu = voltage_constant_current(params.replace_vector(up), current, t)
        vd = voltage_constant_current(params.replace_vector(dn), current, t)
        cols.append((vu - vd) / (2 * h))
    return np.column_stack(cols)


def column_rel_error(a, b):
    scale = np.maximum(np.max(np.abs(a), axis=0), 1e-12)
    return np.max(np.abs(a - b), axis=0) / scale


def random_theta(rng):
    prior = PriorSpec.coarse()
    lo = np.where(np.isfinite(prior.lower), prior.lower, -30.0)
    hi = np.where(np.isfinite(prior.upper), prior.upper, 30.0)
    return rng.uniform(lo, hi)


def test_sensitivity_trivial_columns(nominal, times):
    s = sensitivity(nominal, times, -3.0).s
    assert np.all(s[:, 4] == -3.0)
    assert s[0, 7] == 0.0


def test_sensitivity_matches_finite_differences(nominal, times):
    s = sensitivity(nominal, times, -3.0).s
    assert np.max(column_rel_error(s, fd_sensitivity(nominal, times, -3.0))) <= 1e-5


def test_sensitivity_random_theta_finite_differences(times):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        p = ThveninParams.from_vector(random_theta(rng))
        err = column_rel_error(sensitivity(p, times, -3.0).s, fd_sensitivity(p, times, -3.0))
        worst = max(worst, np.max(err))
    assert worst <= 1e-5


def test_rank_nominal_and_drop_column(nominal, times):
    s = sensitivity(nominal, times, -3.0).s
    assert rank_check(s).rank == 9
    for j in range(9):
        assert rank_check(np.delete(s, j, axis=1)).rank == 8
    # independent oracle
    assert np.linalg.matrix_rank(s) == 9


def test_rank_repeated_rows(nominal):
    s = sensitivity(nominal, np.full(9, 300.0), -3.0).s
    assert rank_check(s).rank < 9


def test_rank_beta1_zero(nominal, times):
    theta = nominal.vector()
    theta[5] = 0.0
    s = sensitivity(nominal.replace_vector(theta), times, -3.0).s
    assert np.all(s[:, 6] == 0.0)
    assert rank_check(s).rank == 8
    with pytest.raises(SingularInformation):
        covariance(s, Q)


def test_rank_needs_enough_samples(nominal):
    with pytest.raises(DegenerateDesign):
        rank_check(sensitivity(nominal, np.arange(8.0), -3.0))


def test_covariance_identity_design():
    assert np.allclose(covariance(np.eye(9), 0.01), 0.01 * np.eye(9), atol=1e-15)


def test_covariance_scaling_and_symmetry(nominal, times):
    s = sensitivity(nominal, times, -3.0)
    c = covariance(s, Q)
    assert np.allclose(covariance(s, 4 * Q), 4 * c, rtol=1e-12, atol=0)
    assert np.max(np.abs(c - c.T)) <= 1e-12 * np.max(np.abs(c))
    eig = np.linalg.eigvalsh(c)
    assert eig.min() >= -1e-10 * eig.max()


def test_full_q_matches_scalar():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(40, 9))
    full = information_matrix(a, Q * np.eye(40))
    assert np.allclose(full, information_matrix(a, Q), rtol=1e-12)
    w = np.diag(rng.uniform(0.5, 2.0, 40))
    assert np.allclose(information_matrix(a, w), a.T @ np.linalg.inv(w) @ a, rtol=1e-10)


def test_cnls_theoretical_accuracy(nominal, times):
    s = sensitivity(nominal, times, -3.0)
    rep = theoretical_accuracy_cnls(s, Q)
    assert rep.bias_term == 0.0
    assert rep.variance_term == pytest.approx(np.trace(covariance(s, Q)), rel=1e-14)
    assert np.all(rep.per_param_nrmse_theoretical < 0.10)


def test_rnls_no_bias_at_prior_mean(nominal, times):
    s = sensitivity(nominal, times, -3.0)
    p0 = PriorSpec.coarse().p0_diag
    rep = theoretical_accuracy_rnls(s, Q, nominal, nominal.vector(), p0)
    assert rep.bias_term == 0.0


def test_rnls_large_prior_matches_cnls(nominal, times):
    s = sensitivity(nominal, times, -3.0)
    prior = PriorSpec.coarse()
    rep = theoretical_accuracy_rnls(s, Q, nominal, prior.theta0, prior.p0_diag * 1e6)
    ref = theoretical_accuracy_cnls(s, Q).variance_term
    assert rep.variance_term == pytest.approx(ref, rel=1e-3)


def test_rnls_expected_estimate_matches_ridge_closed_form(nominal, times):
    # ridge estimator of a linear model: E = (F + P^-1)^-1 (F theta + P^-1 theta0)
    s = sensitivity(nominal, times, -3.0)
    prior = PriorSpec.coarse()
    f = s.s.T @ s.s / Q
    pinv = np.diag(1 / prior.p0_diag)
    th = nominal.vector()
    expected = np.linalg.solve(f + pinv, f @ th + pinv @ prior.theta0)
    rep = theoretical_accuracy_rnls(s, Q, nominal, prior.theta0, prior.p0_diag)
    assert np.allclose(rep.expected_estimate, expected, rtol=1e-8, atol=1e-12)
    assert np.allclose(rep.bias_vector, expected - th, rtol=1e-6, atol=1e-12)


def test_lambda_sweep_trend(nominal, times):
    s = sensitivity(nominal, times, -3.0)
    prior = PriorSpec.coarse()
    lams = np.geomspace(1e-3, 5.0, 200)
    reps = lambda_sweep(s, Q, nominal, prior.theta0, prior.p0_diag, lams)
    bias = np.array([r.bias_term for r in reps])
    assert np.all(np.diff(bias) <= 1e-12 * bias[:-1])
    pair = lambda_sweep(s, Q, nominal, prior.theta0, prior.p0_diag, [0.1, 5.0])
    assert pair[1].total <= pair[0].total


def test_lambda_sweep_single_equals_direct(nominal, times):
    s = sensitivity(nominal, times, -3.0)
    prior = PriorSpec.coarse()
    (one,) = lambda_sweep(s, Q, nominal, prior.theta0, prior.p0_diag, [2.0])
    direct = theoretical_accuracy_rnls(s, Q, nominal, prior.theta0, 2.0 * prior.p0_diag)
    assert one.total == direct.total
    assert np.array_equal(one.bias_vector, direct.bias_vector)


def test_lambda_must_be_positive(nominal, times):
    s = sensitivity(nominal, times, -3.0)
    prior = PriorSpec.coarse()
    with pytest.raises(ValueError):
        lambda_sweep(s, Q, nominal, prior.theta0, prior.p0_diag, [0.0])
