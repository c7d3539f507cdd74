import math

import numpy as np
import pytest

from thevenin_id.errors import EmptyDataset, NonConstantCurrent
from thevenin_id.model import ThveninParams, ocv, r0
from thevenin_id.synthetic import constant_discharge, intermittent_dataset, noise_stream, udds_like_dataset
from thevenin_id.workflows import (
    DischargeDataset,
    PriorSpec,
    build_problem,
    coulomb_capacity,
    extract_rest_points,
    identify,
    regularized_cost,
    validate_lumped_resistance,
    validate_soc_ocv,
    validate_voltage,
)

REFERENCE_MODEL = np.array([2.61, -9.36, 19.7, -19.0, 0.0313, 0.0678, 13.2, 0.0313, 0.0172])


def fd_jacobian(fun, x, rel=1e-6):
    cols = []
    for j in range(x.size):
        h = rel * max(abs(x[j]), 1e-3)
        up, dn = x.copy(), x.copy()
        up[j] += h
        dn[j] -= h
        cols.append((fun(up) - fun(dn)) / (2 * h))
    return np.column_stack(cols)


def test_residual_zero_at_truth(clean_dataset, nominal):
    assert np.max(np.abs(build_problem(clean_dataset).residual(nominal.vector()))) == 0.0


def test_cost_at_truth_is_half_n(nominal):
    clean = constant_discharge(nominal, noise_variance=0.0)
    n = len(clean)
    costs = []
    for k in range(500):
        y = clean.voltages + noise_stream(99, k, n, 2.5e-5)
        data = DischargeDataset(clean.times, clean.currents, y, noise_variance=2.5e-5)
        costs.append(build_problem(data).cost(nominal.vector()))
    assert np.mean(costs) == pytest.approx(n / 2, rel=0.05)


def test_jacobian_matches_finite_differences(noisy_dataset):
    prob = build_problem(noisy_dataset)
    prior = PriorSpec.coarse()
    rng = np.random.default_rng(8)
    lo = np.where(np.isfinite(prior.lower), prior.lower, -30.0)
    hi = np.where(np.isfinite(prior.upper), prior.upper, 30.0)
    for _ in range(20):
        x = rng.uniform(lo, hi)
        jac = prob.jacobian(x)
        fd = fd_jacobian(prob.residual, x)
        scale = np.maximum(np.max(np.abs(jac), axis=0), 1e-12)
        assert np.max(np.max(np.abs(jac - fd), axis=0) / scale) <= 1e-5


def test_build_problem_errors(noisy_dataset):
    varying = DischargeDataset(noisy_dataset.times, np.linspace(-3, -1, len(noisy_dataset)),
                               noisy_dataset.voltages)
    with pytest.raises(NonConstantCurrent):
        build_problem(varying)
    with pytest.raises(EmptyDataset):
        build_problem(DischargeDataset(np.array([]), np.array([]), np.array([])))


def test_regularized_methods_recover_truth(noisy_dataset, nominal):
    prior = PriorSpec.coarse()
    for method in ("cnls", "rnls"):
        rep = identify(noisy_dataset, prior, method)
        rel = np.abs(rep.theta_hat / nominal.vector() - 1)
        assert np.all(rel < 0.10), (method, rel)


def test_derived_quantities_and_anchoring(noisy_dataset):
    prior = PriorSpec.coarse()
    for method in ("benchmark", "cnls", "rnls"):
        rep = identify(noisy_dataset, prior, method)
        p = noisy_dataset.params_like(rep.theta_hat)
        assert ocv(p, 0.0) == pytest.approx(3.3, abs=1e-9)
        assert ocv(p, 1.0) == pytest.approx(4.15, abs=1e-9)
        assert rep.derived["alpha0"] == 3.3
        assert rep.derived["alpha5"] == pytest.approx(0.85 - sum(rep.theta_hat[:4]), abs=1e-12)
        assert rep.derived["capacitance_f"] == pytest.approx(1 / (rep.theta_hat[7] * rep.theta_hat[8]))


def test_zero_noise_start_at_truth(clean_dataset, nominal):
    truth = nominal.vector()
    prior = PriorSpec(truth, PriorSpec.coarse().lower, PriorSpec.coarse().upper, truth, PriorSpec.coarse().p0_diag)
    for method in ("benchmark", "cnls", "rnls"):
        rep = identify(clean_dataset, prior, method)
        assert rep.iterations <= 2
        assert rep.cost <= 1e-16


def test_cnls_unbounded_equals_benchmark(noisy_dataset):
    t1 = PriorSpec.coarse()
    inf = np.full(9, np.inf)
    wide = PriorSpec(t1.initial_guess, -inf, inf, t1.theta0, t1.p0_diag)
    a = identify(noisy_dataset, wide, "cnls")
    b = identify(noisy_dataset, wide, "benchmark")
    assert len(a.iterates) == len(b.iterates)
    for xa, xb in zip(a.iterates, b.iterates):
        assert np.array_equal(xa, xb)


def test_rnls_cost_below_prior_mean_and_guess(noisy_dataset):
    prior = PriorSpec.coarse()
    prob = build_problem(noisy_dataset)
    rep = identify(noisy_dataset, prior, "rnls")
    jbar = regularized_cost(prob, rep.theta_hat, prior.theta0, prior.p0_diag)
    assert rep.cost == pytest.approx(jbar, rel=1e-10)
    assert jbar <= regularized_cost(prob, prior.theta0, prior.theta0, prior.p0_diag)
    assert jbar <= regularized_cost(prob, prior.initial_guess, prior.theta0, prior.p0_diag)


def test_validate_voltage_self_generated(nominal):
    data = udds_like_dataset(nominal, noise_variance=0.0)
    assert np.max(np.abs(validate_voltage(nominal, data).errors)) <= 1e-9


def test_validate_voltage_noise_only(nominal):
    data = udds_like_dataset(nominal)
    rep = validate_voltage(nominal, data)
    assert rep.rms_voltage_error == pytest.approx(math.sqrt(2.5e-5), rel=0.10)


def test_validate_voltage_rest(nominal):
    t = np.arange(0.0, 100.0)
    data = DischargeDataset(t, np.zeros_like(t), np.full_like(t, 4.15))
    rep = validate_voltage(nominal, data)
    assert np.allclose(rep.predicted, 4.15, atol=1e-12)


def test_training_replay_with_reference_model():
    params = ThveninParams.from_vector(REFERENCE_MODEL)
    data = constant_discharge(params, seed=2019)
    rep = validate_voltage(params, data)
    assert rep.rms_voltage_error < 1.1 * math.sqrt(2.5e-5)


def test_soc_ocv_validation_examples(nominal):
    soc = np.linspace(0, 1, 11)
    rep = validate_soc_ocv(nominal, soc, ocv(nominal, soc))
    assert np.max(np.abs(rep.errors)) == 0.0
    rep = validate_soc_ocv(nominal, [0.0, 1.0], [3.31, 4.1])
    assert rep.errors == pytest.approx([3.31 - 3.3, 4.1 - 4.15], abs=1e-12)


def test_lumped_resistance_examples(nominal):
    soc = np.array([1.0, 0.0])
    model = r0(nominal, soc) + nominal.r
    rep = validate_lumped_resistance(nominal, soc, model * 2.0, [-2.0, -2.0])
    assert np.max(np.abs(rep.errors)) <= 1e-15
    assert rep.predicted[0] == pytest.approx(0.0313 + 0.0678 * math.exp(-13.2) + 0.0313, abs=1e-15)
    assert rep.predicted[1] == pytest.approx(0.1304, abs=1e-12)


def test_intermittent_protocol(nominal):
    data = intermittent_dataset(nominal)
    pts = extract_rest_points(data)
    assert len(pts) >= 5
    rep = validate_soc_ocv(nominal, [p.soc for p in pts], [p.rest_voltage for p in pts])
    assert np.max(np.abs(rep.errors)) <= 1e-3
    res = validate_lumped_resistance(nominal, [p.soc for p in pts], [p.recovery for p in pts],
                                     [p.current for p in pts])
    # the last loaded sample sits one 10 s interval before the pause, so the RC branch moves a little more
    assert np.max(np.abs(res.errors)) <= 5e-3
    assert all(p.current == -1.0 for p in pts)


def test_coulomb_capacity(nominal):
    data = constant_discharge(nominal, noise_variance=0.0)
    assert coulomb_capacity(data) == pytest.approx(3.0 * 2400 / 3600, rel=1e-12)
