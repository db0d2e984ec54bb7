import numpy as np
import pytest
from scipy.stats import norm

from state_lp.errors import ConfigError, HacError, NumericalError
from state_lp.estimator import fit_sieve
from state_lp.inference import (
    bartlett_hac,
    bartlett_weights,
    coef_covariance,
    contrast_ci,
    hac_lag,
    irf_curve,
    partialled_regressors,
    pointwise_ci,
    score_process,
    sup_critical_value,
    sup_statistics,
    uniform_band,
    _quad_var,
)
from state_lp.panel import build_regression_sample


@pytest.fixture(scope="module")
def fit_h1(mid_panel):
    s = build_regression_sample(mid_panel, 1, with_intermediate=True)
    return fit_sieve(s, 5, True)


def test_hac_lag_default():
    # N=500, T=200, h=0 gives n = 500 * 199 rows
    assert hac_lag(500 * 199) == 18
    assert hac_lag(100_000) == 18
    assert hac_lag(100) == 4


def test_bartlett_weights_exact():
    assert bartlett_weights(4).tolist() == [0.8, 0.6, 0.4, 0.2]
    assert bartlett_weights(0).size == 0


def test_partialled_regressors_are_projection_residuals(fit_h1):
    D = fit_h1.design
    C, S = D.nuisance, D.sieve_block
    coef, *_ = np.linalg.lstsq(C, S, rcond=None)
    np.testing.assert_allclose(partialled_regressors(fit_h1), S - C @ coef, atol=1e-10)


def test_score_process_brute_force(fit_h1):
    P = partialled_regressors(fit_h1)
    u = fit_h1.residuals
    t = fit_h1.design.time
    sc = score_process(fit_h1)
    for k, period in enumerate(sc.times):
        ref = np.zeros(fit_h1.J)
        for r in range(t.size):
            if t[r] == period:
                ref += P[r] * u[r]
        np.testing.assert_allclose(sc.scores[k], ref, atol=1e-12)
    assert sc.fw_correction < 1e-10


def test_hac_brute_force(rng):
    from state_lp.inference import ScoreSeries

    S = rng.standard_normal((30, 3))
    n, L = 77, 5
    est = bartlett_hac(ScoreSeries(np.arange(30), S, n), L=L)
    ref = np.zeros((3, 3))
    for a in range(30):
        for b in range(30):
            k = abs(a - b)
            if k <= L:
                w = 1.0 if k == 0 else 1 - k / (L + 1)
                ref += w * np.outer(S[a], S[b])
    np.testing.assert_allclose(est.Omega, ref / n, atol=1e-12)


def test_hac_lag_zero_is_white(rng):
    from state_lp.inference import ScoreSeries

    S = rng.standard_normal((20, 2))
    np.testing.assert_allclose(bartlett_hac(ScoreSeries(np.arange(20), S, 20), L=0).Omega,
                               S.T @ S / 20, atol=1e-14)


def test_hac_lag_too_long(rng):
    from state_lp.inference import ScoreSeries

    with pytest.raises(HacError):
        bartlett_hac(ScoreSeries(np.arange(5), rng.standard_normal((5, 2)), 5), L=5)


def test_covariance_formula(fit_h1):
    hac = bartlett_hac(score_process(fit_h1), L=3)
    V = coef_covariance(hac, fit_h1).V
    Ainv = np.linalg.inv(fit_h1.schur)
    np.testing.assert_allclose(V, Ainv @ hac.Omega @ Ainv.T / fit_h1.n, atol=1e-12, rtol=1e-10)


def test_small_instance_frozen():
    # hand-computable: scores (1, 2, -1), n = 3, L = 1 -> (6 + 2 * 0.5 * (2 - 2)) / 3 = 2
    from state_lp.inference import ScoreSeries

    S = np.array([[1.0], [2.0], [-1.0]])
    assert bartlett_hac(ScoreSeries(np.arange(3), S, 3), L=1).Omega[0, 0] == pytest.approx(2.0, abs=1e-15)


def test_pointwise_ci(fit_h1):
    cov = coef_covariance(bartlett_hac(score_process(fit_h1)), fit_h1)
    grid = np.linspace(-1, 1, 7)
    est, se, lo, hi = pointwise_ci(fit_h1, cov, grid, alpha=0.1, delta=2.0)
    np.testing.assert_allclose(est, 2 * fit_h1.g(grid), atol=1e-13)
    np.testing.assert_allclose(hi - est, norm.ppf(0.95) * se, atol=1e-13)
    from state_lp.basis import eval_basis

    Phi = eval_basis(fit_h1.basis, grid)
    np.testing.assert_allclose(se, 2 * np.sqrt(np.diag(Phi @ cov.V @ Phi.T)), rtol=1e-10)


def test_contrast_of_equal_points_is_zero(fit_h1):
    cov = coef_covariance(bartlett_hac(score_process(fit_h1)), fit_h1)
    c, se, lo, hi = contrast_ci(fit_h1, cov, 0.3, 0.3)
    assert c == 0 and se == 0


def test_negative_variance_detected():
    V = np.array([[1.0, 0.0], [0.0, -1e-6]])
    with pytest.raises(NumericalError):
        _quad_var(np.array([[0.0, 1.0]]), V)
    assert _quad_var(np.array([[0.0, 1.0]]), np.diag([1.0, -1e-14]))[0] == 0.0


def test_bootstrap_scalar_quantile():
    # J = 1: sup |sigma xi| has (1 - alpha) quantile sigma * z_{1 - alpha/2}
    sigma = 0.7
    c = sup_critical_value(np.ones((1, 1)), np.array([[sigma**2]]), B=100_000, alpha=0.05, seed=9)
    assert abs(c / (sigma * norm.ppf(0.975)) - 1) < 0.02


def test_bootstrap_draws_are_addressable():
    Phi = np.eye(3)
    V = np.diag([1.0, 2.0, 3.0])
    a = sup_statistics(Phi, V, 200, seed=4)
    b = sup_statistics(Phi, V, 300, seed=4)
    np.testing.assert_array_equal(a, b[:200])
    assert not np.array_equal(a, sup_statistics(Phi, V, 200, seed=5))


def test_band_is_constant_width_and_covers_pointwise(fit_h1):
    grid = np.linspace(-2, 2, 41)
    curve = irf_curve(fit_h1, grid, B=500, alpha=0.05, seed=1)
    width = curve.band_hi - curve.band_lo
    np.testing.assert_allclose(width, 2 * curve.critical_value, rtol=1e-12)
    assert curve.band_width == pytest.approx(2 * curve.critical_value)
    again = irf_curve(fit_h1, grid, B=500, alpha=0.05, seed=1)
    np.testing.assert_array_equal(curve.band_lo, again.band_lo)


def test_band_config_errors(fit_h1):
    cov = coef_covariance(bartlett_hac(score_process(fit_h1)), fit_h1)
    with pytest.raises(ConfigError):
        uniform_band(fit_h1, cov, [0.0], B=50)
    with pytest.raises(ConfigError):
        uniform_band(fit_h1, cov, [0.0], alpha=1.5)
    with pytest.raises(ConfigError):
        uniform_band(fit_h1, cov, [])
