"""HAC inference for sieve projections: pointwise intervals and uniform bands.

The score at base time t sums the partialled sieve regressors times the
residuals over units; its long-run covariance (Bartlett kernel) feeds the
sandwich covariance of the sieve coefficients. Uniform bands come from the
sup of the Gaussian process phi(z)' V^{1/2} xi over a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .basis import eval_basis
from .errors import ConfigError, HacError, NumericalError, RankError
from .estimator import RANK_TOL, LpFit
from .rng import stream

__all__ = [
    "ScoreSeries",
    "HacEstimate",
    "CoefCovariance",
    "IrfCurve",
    "hac_lag",
    "bartlett_weights",
    "partialled_regressors",
    "score_process",
    "bartlett_hac",
    "coef_covariance",
    "pointwise_ci",
    "contrast_ci",
    "sup_statistics",
    "sup_critical_value",
    "uniform_band",
    "irf_curve",
]

NEG_VAR_TOL = 1e-12


@dataclass(frozen=True)
class ScoreSeries:
    """Per-period scores s_t (rows) with the sample size used for scaling.

    ``fw_correction`` is max |W'u|/n over nuisance columns; OLS orthogonality
    makes it zero up to rounding.
    """

    times: np.ndarray
    scores: np.ndarray
    n: int
    fw_correction: float = 0.0

    def __len__(self):
        return self.scores.shape[0]


@dataclass(frozen=True)
class HacEstimate:
    Omega: np.ndarray
    L: int
    weights: np.ndarray


@dataclass(frozen=True)
class CoefCovariance:
    V: np.ndarray
    n: int


@dataclass(frozen=True)
class IrfCurve:
    """Estimate, pointwise intervals and a uniform band on a grid of states."""

    grid: np.ndarray
    estimate: np.ndarray
    pointwise_se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    critical_value: float
    alpha: float
    B: int
    seed: int
    delta: float = 1.0
    horizon: int = 0
    J: int = 0

    @property
    def band_width(self) -> float:
        return float(np.mean(self.band_hi - self.band_lo))


def hac_lag(n: int) -> int:
    """Default Bartlett truncation lag floor(4 (n/100)^(2/9))."""
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def bartlett_weights(L: int) -> np.ndarray:
    """w_k = 1 - k/(L+1), k = 1..L, computed as one rounded division."""
    k = np.arange(1, L + 1)
    return (L + 1.0 - k) / (L + 1.0)


def _solve_checked(A, B, what):
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size and sv[-1] <= RANK_TOL * sv[0]:
        raise RankError(f"{what} is singular")
    return np.linalg.solve(A, B)


def partialled_regressors(fit: LpFit) -> np.ndarray:
    """Sieve regressors with the nuisance columns projected out, (n, J)."""
    S = fit.design.sieve_block
    if fit.A22.size == 0:
        return S
    C = fit.design.nuisance
    M = _solve_checked(fit.A22, fit.A12.T, "A22")
    return S - C @ M


def score_process(fit: LpFit) -> ScoreSeries:
    P = partialled_regressors(fit)
    u = fit.residuals
    time = fit.design.time
    order_ok = np.all(np.diff(time) >= 0)
    if not order_ok:
        idx = np.argsort(time, kind="stable")
        P, u, time = P[idx], u[idx], time[idx]
    times, start = np.unique(time, return_index=True)
    scores = np.add.reduceat(P * u[:, None], start, axis=0)
    fw = 0.0
    if fit.A22.size:
        fw = float(np.max(np.abs(fit.design.nuisance.T @ fit.residuals))) / fit.n
    return ScoreSeries(times=times, scores=scores, n=fit.n, fw_correction=fw)


def bartlett_hac(scores: ScoreSeries, L: Optional[int] = None, n: Optional[int] = None) -> HacEstimate:
    """Omega = Gamma(0) + sum_k w_k (Gamma(k) + Gamma(k)'), Gamma(k) = sum_t s_t s_{t-k}' / n."""
    n = scores.n if n is None else int(n)
    L = hac_lag(n) if L is None else int(L)
    S = scores.scores
    W = S.shape[0]
    if L < 0:
        raise HacError(f"lag must be nonnegative, got {L}")
    if L >= W:
        raise HacError(f"lag L={L} must be smaller than the series length {W}")
    w = bartlett_weights(L)
    Omega = S.T @ S / n
    for k in range(1, L + 1):
        G = S[k:].T @ S[:-k] / n
        Omega = Omega + w[k - 1] * (G + G.T)
    Omega = 0.5 * (Omega + Omega.T)
    return HacEstimate(Omega=Omega, L=L, weights=w)


def coef_covariance(hac: HacEstimate, fit: LpFit) -> CoefCovariance:
    """V = Atilde^{-1} Omega Atilde^{-T} / n with Atilde the Schur complement."""
    Ainv = _solve_checked(fit.schur, np.eye(fit.J), "Schur complement")
    V = Ainv @ hac.Omega @ Ainv.T / fit.n
    return CoefCovariance(V=0.5 * (V + V.T), n=fit.n)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


def _quad_var(Phi, V):
    var = np.einsum("mj,jk,mk->m", Phi, V, Phi)
    if np.any(var < -NEG_VAR_TOL):
        raise NumericalError(f"negative variance {var.min():.3e}")
    return np.maximum(var, 0.0)


def pointwise_ci(fit: LpFit, cov: CoefCovariance, grid, alpha: float = 0.05, delta: float = 1.0):
    """Returns (estimate, se, lo, hi) with se the standard error of g(z) * delta."""
    _check_alpha(alpha)
    Phi = eval_basis(fit.basis, grid)
    est = Phi @ fit.b * delta
    se = np.sqrt(_quad_var(Phi, cov.V)) * abs(delta)
    zc = norm.ppf(1.0 - alpha / 2.0)
    return est, se, est - zc * se, est + zc * se


def contrast_ci(fit: LpFit, cov: CoefCovariance, z_a: float, z_b: float,
                alpha: float = 0.05, delta: float = 1.0):
    """Interval for (g(z_a) - g(z_b)) * delta; returns (center, se, lo, hi)."""
    _check_alpha(alpha)
    Phi = eval_basis(fit.basis, [z_a, z_b])
    dphi = (Phi[0] - Phi[1])[None, :]
    center = float(dphi[0] @ fit.b) * delta
    se = float(np.sqrt(_quad_var(dphi, cov.V))[0]) * abs(delta)
    zc = norm.ppf(1.0 - alpha / 2.0)
    return center, se, center - zc * se, center + zc * se


def _sqrt_psd(V):
    try:
        w, U = np.linalg.eigh(V)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite eigenvalues in covariance")
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


def sup_statistics(Phi: np.ndarray, V: np.ndarray, B: int, seed: int) -> np.ndarray:
    """max_m |phi(z_m)' V^{1/2} xi_b| for b = 0..B-1.

    Draw b uses its own Philox stream ``(seed, b)``, so the statistics do not
    depend on how draws are batched or distributed.
    """
    root = _sqrt_psd(V)
    L = Phi @ root
    J = V.shape[0]
    xi = np.empty((B, J))
    for b in range(B):
        xi[b] = stream(seed, b).standard_normal(J)
    return np.max(np.abs(xi @ L.T), axis=1)


def sup_critical_value(Phi, V, B: int, alpha: float, seed: int) -> float:
    """The ceil((1-alpha)B)-th order statistic of the sup statistics."""
    _check_alpha(alpha)
    if B < 100:
        raise ConfigError(f"need at least 100 bootstrap draws, got {B}")
    T = np.sort(sup_statistics(Phi, V, B, seed))
    k = int(math.ceil((1.0 - alpha) * B))
    return float(T[min(max(k, 1), B) - 1])


def uniform_band(fit: LpFit, cov: CoefCovariance, grid, B: int = 2000, alpha: float = 0.05,
                 delta: float = 1.0, seed: int = 0) -> IrfCurve:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ConfigError("empty grid")
    est, se, lo, hi = pointwise_ci(fit, cov, grid, alpha, delta)
    Phi = eval_basis(fit.basis, grid)
    c = sup_critical_value(Phi, cov.V, B, alpha, seed)
    half = c * abs(delta)
    return IrfCurve(
        grid=grid, estimate=est, pointwise_se=se, ci_lo=lo, ci_hi=hi,
        band_lo=est - half, band_hi=est + half, critical_value=c,
        alpha=float(alpha), B=int(B), seed=int(seed), delta=float(delta),
        horizon=fit.horizon, J=fit.J,
    )


def irf_curve(fit: LpFit, grid, B: int = 2000, alpha: float = 0.05, delta: float = 1.0,
              seed: int = 0, L: Optional[int] = None) -> IrfCurve:
    """Scores, HAC, covariance and the band in one call."""
    hac = bartlett_hac(score_process(fit), L=L)
    return uniform_band(fit, coef_covariance(hac, fit), grid, B, alpha, delta, seed)
