"""Sieve local-projection design, OLS fit and block (Schur) representation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.linalg as sla

from .basis import BasisSpec, eval_basis, fill_weighted_basis, make_basis
from .errors import DesignError, RankError
from .panel import RegressionSample

__all__ = [
    "RANK_TOL",
    "DesignMatrix",
    "LpFit",
    "LinearLpFit",
    "sample_basis",
    "build_design",
    "fit_ols",
    "fit_sieve",
    "schur_b",
    "evaluate_irf",
    "fit_linear_lp",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class DesignMatrix:
    """Regressors of one horizon-h projection, stored as one (n, k) matrix.

    Column layout: the sieve block phi_j(Z_{i,t-1}) X_t, then one block per
    future period s = 1..h holding phi_j(Z_{i,t+s-1}) X_{t+s} (same knots),
    then the controls W_{i,t-1}.
    """

    matrix: np.ndarray
    J: int
    n_intermediate: int
    response: np.ndarray
    time: np.ndarray
    basis: BasisSpec
    horizon: int = 0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def sieve_block(self) -> np.ndarray:
        return self.matrix[:, :self.J]

    @property
    def intermediate_blocks(self) -> Tuple[np.ndarray, ...]:
        J = self.J
        return tuple(self.matrix[:, J * (s + 1):J * (s + 2)] for s in range(self.n_intermediate))

    @property
    def control_block(self) -> np.ndarray:
        return self.matrix[:, self.J * (1 + self.n_intermediate):]

    @property
    def nuisance(self) -> np.ndarray:
        """Every non-sieve column: intermediate blocks followed by controls."""
        return self.matrix[:, self.J:]


@dataclass(frozen=True)
class LpFit:
    """OLS fit of one horizon with its second-moment blocks.

    ``gamma`` stacks the intermediate-block coefficients (if any) ahead of the
    control coefficients; for inference both are treated as nuisance terms.
    """

    horizon: int
    J: int
    b: np.ndarray
    gamma: np.ndarray
    residuals: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    schur: np.ndarray
    n: int
    basis: BasisSpec
    design: DesignMatrix = field(repr=False)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.b, self.gamma])

    @property
    def ssr(self) -> float:
        return float(self.residuals @ self.residuals)

    def g(self, z) -> np.ndarray:
        return eval_basis(self.basis, z) @ self.b


def sample_basis(sample: RegressionSample, J: int, with_intermediate: bool = False) -> BasisSpec:
    """Basis for ``sample``: quantile knots from the base states Z_{i,t-1}.

    When intermediate blocks are requested the boundary knots are widened to
    cover the future states too, so those blocks are not clamped.
    """
    bounds = None
    if with_intermediate and sample.has_future:
        fs = sample.future_state
        bounds = (float(fs.min()), float(fs.max()))
    return make_basis(sample.state, J, bounds=bounds)


def build_design(sample: RegressionSample, basis: BasisSpec, with_intermediate: bool = False) -> DesignMatrix:
    h = sample.horizon
    if with_intermediate and h >= 1 and not sample.has_future:
        raise DesignError("intermediate blocks requested but the sample carries no future shocks")
    n = sample.n
    controls = np.asarray(sample.controls, dtype=float).reshape(n, -1)
    if sample.state.shape[0] != n or sample.shock.shape[0] != n:
        raise DesignError("sample arrays have inconsistent lengths")
    n_int = h if with_intermediate and h >= 1 else 0
    J = basis.J
    D = np.zeros((n, J * (1 + n_int) + controls.shape[1]))
    fill_weighted_basis(basis, sample.state, sample.shock, D, 0)
    for s in range(n_int):
        fill_weighted_basis(basis, sample.future_state[:, s], sample.future_shock[:, s], D, J * (s + 1))
    D[:, J * (1 + n_int):] = controls
    return DesignMatrix(matrix=D, J=J, n_intermediate=n_int, response=sample.response,
                        time=sample.time, basis=basis, horizon=h)


def _dependent_columns(R: np.ndarray) -> list:
    """Columns of the (scaled) triangular factor that are numerically dependent."""
    _, r, piv = sla.qr(R, pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > RANK_TOL * d[0])) if d.size and d[0] > 0 else 0
    return sorted(int(c) for c in piv[rank:])


def _qr_lstsq(D: np.ndarray, y: np.ndarray):
    """Least squares via Householder QR of the augmented matrix [D | y].

    Returns (theta, R) with D = QR. Rank is checked on the column-scaled
    triangular factor at relative tolerance ``RANK_TOL``.
    """
    n, k = D.shape
    if n <= k:
        raise DesignError(f"need more rows than columns, got n={n}, k={k}")
    norms = np.sqrt(np.einsum("ij,ij->j", D, D))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise RankError("design has all-zero columns", zero.tolist())
    Raug = np.linalg.qr(np.column_stack([D, y]), mode="r")
    R = Raug[:k, :k]
    qty = Raug[:k, k]
    Rs = R / norms
    sv = np.linalg.svd(Rs, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise RankError("rank-deficient design", _dependent_columns(Rs))
    theta = sla.solve_triangular(R, qty)
    return theta, R


def fit_ols(design: DesignMatrix) -> LpFit:
    """Least-squares fit of ``design``; also fills the blocks used for inference."""
    D = design.matrix
    y = design.response
    n = design.n
    J = design.J
    theta, R = _qr_lstsq(D, y)
    resid = y - D @ theta
    A = (R.T @ R) / n
    Bv = (D.T @ y) / n
    A11, A12, A22 = A[:J, :J], A[:J, J:], A[J:, J:]
    if A22.size:
        schur = A11 - A12 @ np.linalg.solve(A22, A12.T)
    else:
        schur = A11.copy()
    schur = 0.5 * (schur + schur.T)
    return LpFit(
        horizon=design.horizon, J=J, b=theta[:J].copy(), gamma=theta[J:].copy(),
        residuals=resid, A11=A11, A12=A12, A22=A22, B1=Bv[:J], B2=Bv[J:],
        schur=schur, n=n, basis=design.basis, design=design,
    )


def fit_sieve(sample: RegressionSample, J: int, with_intermediate: bool = False) -> LpFit:
    basis = sample_basis(sample, J, with_intermediate)
    return fit_ols(build_design(sample, basis, with_intermediate))


def _check_invertible(M: np.ndarray, what: str):
    if M.size == 0:
        return
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise RankError(f"{what} is singular")


def schur_b(fit: LpFit) -> np.ndarray:
    """Sieve coefficients rebuilt from the second-moment blocks."""
    if fit.A22.size == 0:
        _check_invertible(fit.A11, "A11")
        return np.linalg.solve(fit.A11, fit.B1)
    _check_invertible(fit.A22, "A22")
    rhs = fit.B1 - fit.A12 @ np.linalg.solve(fit.A22, fit.B2)
    _check_invertible(fit.schur, "Schur complement")
    return np.linalg.solve(fit.schur, rhs)


def evaluate_irf(fit: LpFit, grid, delta: float = 1.0) -> np.ndarray:
    """Estimated response g_h(z) * delta on ``grid``."""
    return fit.g(grid) * float(delta)


@dataclass(frozen=True)
class LinearLpFit:
    """Linear-interaction projection: (alpha + beta z) X_t + controls."""

    horizon: int
    alpha: float
    beta: float
    gamma: np.ndarray
    residuals: np.ndarray
    n: int

    @property
    def ssr(self) -> float:
        return float(self.residuals @ self.residuals)

    def irf(self, grid, delta: float = 1.0) -> np.ndarray:
        return (self.alpha + self.beta * np.asarray(grid, dtype=float)) * float(delta)


def fit_linear_lp(sample: RegressionSample) -> LinearLpFit:
    D = np.column_stack([sample.shock, sample.state * sample.shock,
                         np.asarray(sample.controls).reshape(sample.n, -1)])
    theta, _ = _qr_lstsq(D, sample.response)
    resid = sample.response - D @ theta
    return LinearLpFit(horizon=sample.horizon, alpha=float(theta[0]), beta=float(theta[1]),
                       gamma=theta[2:].copy(), residuals=resid, n=sample.n)
