import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize
from scipy.special import expit

from wbic.core import ChainConfig, DomainError, trace_summary
from wbic.logistic import (
    PIMA_COLUMNS,
    ConvergenceError,
    LogisticModel,
    LogisticModelSpec,
    fit_mle_logistic,
    grad_log_likelihood_logistic,
    hessian_log_likelihood_logistic,
    log_likelihood_logistic,
    log_prior_logistic,
    pima_design,
    standardize,
    tempered_mode_logistic,
    tempered_rwm_logistic,
    unit_information_prior_logistic,
)


def _data(n=80, k=3, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    beta = np.linspace(-0.5, 1.0, k)
    y = (rng.random(n) < expit(X @ beta)).astype(float)
    return X, y


def test_log_likelihood_matches_naive_product():
    X, y = _data()
    spec = LogisticModelSpec(X, y, tau=1.0)
    theta = np.array([0.2, -0.4, 0.9])
    p = 1 / (1 + np.exp(-(X @ theta)))
    naive = math.log(np.prod(np.where(y == 1, p, 1 - p)))
    assert log_likelihood_logistic(spec, theta) == pytest.approx(naive, rel=1e-12)


def test_log_likelihood_vectorised_and_stable():
    X, y = _data()
    spec = LogisticModelSpec(X, y, tau=1.0)
    thetas = np.random.default_rng(1).standard_normal((5, 3))
    np.testing.assert_allclose(log_likelihood_logistic(spec, thetas), [log_likelihood_logistic(spec, t) for t in thetas])
    assert np.isfinite(log_likelihood_logistic(spec, np.array([800.0, 0, 0])))


def test_gradient_and_hessian_by_finite_differences():
    X, y = _data()
    spec = LogisticModelSpec(X, y, tau=1.0)
    theta = np.array([0.1, 0.3, -0.2])
    g = grad_log_likelihood_logistic(spec, theta)
    H = hessian_log_likelihood_logistic(spec, theta)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (log_likelihood_logistic(spec, theta + e) - log_likelihood_logistic(spec, theta - e)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-6)
        fd_g = (grad_log_likelihood_logistic(spec, theta + e) - grad_log_likelihood_logistic(spec, theta - e)) / (2 * h)
        np.testing.assert_allclose(H[:, j], fd_g, rtol=1e-5)


def test_mle_matches_generic_optimiser():
    X, y = _data(200, 4, 2)
    spec = LogisticModelSpec(X, y, tau=1.0)
    mle = fit_mle_logistic(spec)
    res = optimize.minimize(lambda th: -log_likelihood_logistic(spec, th), np.zeros(4), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000})
    np.testing.assert_allclose(mle, res.x, atol=1e-4)


def test_mle_intercept_only_grid():
    y = np.array([1, 0, 0, 1, 1, 1, 0, 1.0])
    spec = LogisticModelSpec(np.ones((8, 1)), y, tau=1.0)
    grid = np.linspace(-3, 3, 600001)
    ll = [log_likelihood_logistic(spec, np.array([g])) for g in grid[::1000]]
    coarse = grid[::1000][int(np.argmax(ll))]
    assert fit_mle_logistic(spec)[0] == pytest.approx(math.log(5 / 3), abs=1e-10)
    assert abs(coarse - math.log(5 / 3)) < 0.01


def test_separable_data_raises():
    X = np.column_stack([np.ones(6), [-3, -2, -1, 1, 2, 3.0]])
    y = np.array([0, 0, 0, 1, 1, 1.0])
    with pytest.raises(ConvergenceError):
        fit_mle_logistic(LogisticModelSpec(X, y, tau=1.0))


def test_prior_normalised():
    X, y = _data(10, 2)
    spec = LogisticModelSpec(X, y, prior_mean=[0.5, -1.0], prior_cov=[[2.0, 0.3], [0.3, 0.5]])
    total = integrate.dblquad(lambda b, a: math.exp(log_prior_logistic(spec, np.array([a, b]))), -12, 13, -6, 4)[0]
    assert total == pytest.approx(1.0, abs=1e-7)


def test_spec_validation():
    X, y = _data(10, 2)
    with pytest.raises(DomainError):
        LogisticModelSpec(X, y * 2, tau=1.0)
    with pytest.raises(DomainError):
        LogisticModelSpec(X, y, tau=-1.0)
    with pytest.raises(DomainError):
        LogisticModelSpec(X, y)
    with pytest.raises(DomainError):
        LogisticModelSpec(X, y, prior_mean=[0, 0], prior_cov=[[1, 0], [0, -1.0]])


def test_tempered_mode_is_stationary():
    X, y = _data()
    spec = LogisticModelSpec(X, y, tau=0.5)
    for t in (0.0, 0.3, 1.0):
        mode, info = tempered_mode_logistic(spec, t)
        grad = t * grad_log_likelihood_logistic(spec, mode) - 0.5 * mode
        assert np.linalg.norm(grad) < 1e-8
        assert np.all(np.linalg.eigvalsh(info) > 0)


def test_rwm_expectation_at_t1_matches_quadrature():
    X, y = _data(40, 2, 5)
    spec = LogisticModelSpec(X, y, tau=0.5)
    mode, info = tempered_mode_logistic(spec, 1.0)
    sd = np.sqrt(np.diag(np.linalg.inv(info)))
    lo, hi = mode - 9 * sd, mode + 9 * sd
    shift = log_likelihood_logistic(spec, mode) + log_prior_logistic(spec, mode)

    def dens(b, a):
        th = np.array([a, b])
        return math.exp(log_likelihood_logistic(spec, th) + log_prior_logistic(spec, th) - shift)

    Z = integrate.dblquad(dens, lo[0], hi[0], lo[1], hi[1], epsrel=1e-9)[0]
    M = integrate.dblquad(lambda b, a: dens(b, a) * log_likelihood_logistic(spec, np.array([a, b])),
                          lo[0], hi[0], lo[1], hi[1], epsrel=1e-9)[0]
    exact = M / Z
    trace = tempered_rwm_logistic(spec, 1.0, ChainConfig(60_000, 5_000), 3)
    mean, _, se, _ = trace_summary(trace)
    assert abs(mean - exact) < 4 * se
    assert 0.15 < trace.diagnostics["acceptance_rate"] < 0.6


def test_rwm_acceptance_warning():
    X, y = _data()
    spec = LogisticModelSpec(X, y, tau=1.0)
    with pytest.warns(UserWarning, match="acceptance"):
        tr = tempered_rwm_logistic(spec, 1.0, ChainConfig(500, 100, proposal_scale=40.0), 1)
    assert tr.diagnostics["acceptance_warning"] is True


def test_rwm_deterministic():
    X, y = _data()
    model = LogisticModel(LogisticModelSpec(X, y, tau=0.01))
    a = model.sample_tempered(0.2, ChainConfig(1000, 100), 9)
    b = model.sample_tempered(0.2, ChainConfig(1000, 100), 9)
    np.testing.assert_array_equal(a.log_lik, b.log_lik)


def test_unit_information_prior():
    X, y = _data(120, 3, 4)
    n = 120
    mean, cov = unit_information_prior_logistic(X, y)
    np.testing.assert_allclose(mean, fit_mle_logistic(LogisticModelSpec(X, y, tau=1.0)))
    np.testing.assert_allclose(cov, np.linalg.inv(X.T @ X) / n)
    _, cov2 = unit_information_prior_logistic(X, y, "unit_information")
    np.testing.assert_allclose(cov2, n * np.linalg.inv(X.T @ X))
    with pytest.raises(DomainError):
        unit_information_prior_logistic(X, y, "nope")


def test_standardize_population_sd():
    A = standardize(np.array([[1.0, 10], [2, 20], [3, 60]]))
    np.testing.assert_allclose(A.mean(axis=0), 0, atol=1e-15)
    np.testing.assert_allclose(A.std(axis=0), 1)


def test_pima_design():
    rng = np.random.default_rng(0)
    data = {c: rng.standard_normal(50) * 3 + 7 for c in PIMA_COLUMNS}
    data["diabetes"] = (rng.random(50) < 0.3).astype(float)
    X1, y = pima_design(data, 1)
    X2, _ = pima_design(data, 2)
    assert X1.shape == (50, 5) and X2.shape == (50, 6)
    np.testing.assert_allclose(X2[:, :5], X1)
    np.testing.assert_allclose(X2[:, 5], standardize(data["AGE"][:, None])[:, 0])
    with pytest.raises(DomainError):
        pima_design(data, 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=3, max_size=3))
def test_hessian_negative_definite(theta):
    X, y = _data()
    spec = LogisticModelSpec(X, y, tau=1.0)
    H = hessian_log_likelihood_logistic(spec, np.array(theta))
    # far from the data the curvature underflows; allow zero only at machine precision
    assert np.all(np.linalg.eigvalsh(H) <= 1e-12 * (1 + np.abs(H).max()))
    if max(abs(v) for v in theta) < 5:
        assert np.all(np.linalg.eigvalsh(H) < 0)


def test_expected_deviance_increases_with_temperature():
    from scipy import stats

    from wbic.core import chain_seed, power_schedule

    X, y = _data(40, 2, 1)
    spec = LogisticModelSpec(X, y, tau=0.5)
    ts = power_schedule(19, 4).points
    means = [trace_summary(tempered_rwm_logistic(spec, t, ChainConfig(8000, 1000), chain_seed(2, j)))[0]
             for j, t in enumerate(ts)]
    assert stats.spearmanr(ts, means).statistic > 0.95
