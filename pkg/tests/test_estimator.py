import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from state_lp.basis import eval_basis
from state_lp.errors import DesignError, RankError
from state_lp.estimator import (
    DesignMatrix,
    build_design,
    evaluate_irf,
    fit_linear_lp,
    fit_ols,
    fit_sieve,
    sample_basis,
    schur_b,
)
from state_lp.montecarlo import DgpSpec, simulate_dgp
from state_lp.panel import PanelDataset, build_regression_sample

from conftest import random_panel


def _design(D, y, J, n_int=0):
    n = D.shape[0]
    return DesignMatrix(matrix=D, J=J, n_intermediate=n_int, response=y,
                        time=np.repeat(np.arange(n // 5 + 1), 5)[:n], basis=None)


def test_design_layout_matches_brute_force(rng):
    p = random_panel(rng, N=5, T=12, Q=2)
    s = build_regression_sample(p, 2, with_intermediate=True)
    basis = sample_basis(s, 6, with_intermediate=True)
    d = build_design(s, basis, with_intermediate=True)
    assert d.matrix.shape == (s.n, 6 * 3 + 2)
    for r in range(s.n):
        row = list(eval_basis(basis, [s.state[r]])[0] * s.shock[r])
        for k in range(2):
            row += list(eval_basis(basis, [s.future_state[r, k]])[0] * s.future_shock[r, k])
        row += list(s.controls[r])
        np.testing.assert_allclose(d.matrix[r], row, atol=1e-15)
    assert d.intermediate_blocks[1].shape == (s.n, 6)
    np.testing.assert_array_equal(d.control_block, s.controls)


def test_future_states_inside_boundary(rng):
    p = random_panel(rng, N=5, T=12)
    s = build_regression_sample(p, 3, with_intermediate=True)
    lo, hi = sample_basis(s, 5, with_intermediate=True).boundary_knots
    assert lo <= s.future_state.min() and hi >= s.future_state.max()


def test_ols_matches_lstsq(rng):
    D = rng.standard_normal((200, 9))
    y = rng.standard_normal(200)
    fit = fit_ols(_design(D, y, 5))
    ref, *_ = np.linalg.lstsq(D, y, rcond=None)
    np.testing.assert_allclose(fit.theta, ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(fit.residuals, y - D @ ref, atol=1e-10)
    np.testing.assert_allclose(fit.A11, D[:, :5].T @ D[:, :5] / 200, atol=1e-12)
    np.testing.assert_allclose(fit.B2, D[:, 5:].T @ y / 200, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    J=st.integers(1, 8),
    q=st.integers(0, 6),
    corr=st.floats(0.0, 0.95),
)
def test_schur_matches_full_ols(seed, J, q, corr):
    r = np.random.default_rng(seed)
    n = 150
    base = r.standard_normal((n, J + q))
    D = np.sqrt(1 - corr) * base + np.sqrt(corr) * r.standard_normal((n, 1))
    y = D @ r.standard_normal(J + q) + r.standard_normal(n)
    fit = fit_ols(_design(D, y, J))
    np.testing.assert_allclose(schur_b(fit), fit.b, atol=1e-8, rtol=1e-8)


def test_duplicate_column_is_rank_error(rng):
    D = rng.standard_normal((100, 5))
    D = np.column_stack([D, D[:, 2]])
    with pytest.raises(RankError) as info:
        fit_ols(_design(D, rng.standard_normal(100), 3))
    assert set(info.value.columns) & {2, 5}


def test_zero_column(rng):
    D = rng.standard_normal((100, 4))
    D[:, 1] = 0
    with pytest.raises(RankError) as info:
        fit_ols(_design(D, rng.standard_normal(100), 2))
    assert list(info.value.columns) == [1]


def test_too_few_rows(rng):
    with pytest.raises(DesignError):
        fit_ols(_design(rng.standard_normal((4, 4)), rng.standard_normal(4), 2))


def test_exact_cubic_recovered():
    # noise-free outcome with cubic g is fitted exactly at J = 4
    r = np.random.default_rng(3)
    N, T = 30, 25
    Z = r.standard_normal((N, T))
    X = r.standard_normal(T)
    Y = np.zeros((N, T))
    g = lambda z: 0.5 * z + 0.3 * z**2 - 0.25 * z**3
    Y[:, 1:] = g(Z[:, :-1]) * X[1:]
    p = PanelDataset.from_arrays(Y, X, Z)
    fit = fit_sieve(build_regression_sample(p, 0), 4)
    grid = np.linspace(Z.min(), Z.max(), 50)
    np.testing.assert_allclose(fit.g(grid), g(grid), atol=1e-9)
    assert fit.ssr < 1e-18 * fit.n


def test_irf_linear_in_delta(small_sample):
    fit = fit_sieve(small_sample, 6)
    grid = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(evaluate_irf(fit, grid, 2.5), 2.5 * evaluate_irf(fit, grid, 1.0), rtol=1e-15)
    assert not evaluate_irf(fit, grid, 0.0).any()


def test_intermediate_terms_change_only_nuisance(mid_panel):
    s = build_regression_sample(mid_panel, 2, with_intermediate=True)
    with_int = fit_sieve(s, 5, True)
    without = fit_sieve(s, 5, False)
    assert with_int.gamma.size == 2 * 5 + 1 and without.gamma.size == 1
    assert with_int.ssr < without.ssr


def test_linear_lp_recovers_linear_g():
    spec = DgpSpec(g=(0.4, -0.7), burn_in=100)
    p = simulate_dgp(spec, 300, 60, seed=2)
    lin = fit_linear_lp(build_regression_sample(p, 0))
    assert abs(lin.alpha - 0.4) < 0.05 and abs(lin.beta + 0.7) < 0.03
    np.testing.assert_allclose(lin.irf([1.0], 2.0), [2 * (lin.alpha + lin.beta)])
