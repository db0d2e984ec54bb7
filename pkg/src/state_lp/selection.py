"""Sieve-dimension selection: AIC, GCV, cross-validated LASSO, fixed oracle."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import BasisError, ConfigError, DesignError, RankError, SelectionError
from .estimator import build_design, sample_basis
from .lasso import lambda_max, lasso_cd, lasso_path
from .panel import RegressionSample

__all__ = [
    "Selector",
    "SelectionResult",
    "DEFAULT_CANDIDATES",
    "candidate_ssr",
    "select_aic",
    "select_gcv",
    "select_lasso",
    "select_oracle",
    "select_dimension",
    "time_block_folds",
]

log = logging.getLogger(__name__)

DEFAULT_CANDIDATES = tuple(range(4, 21))
GRAM_TOL = 1e-13


class Selector(str, enum.Enum):
    AIC = "aic"
    GCV = "gcv"
    LASSO = "lasso"
    ORACLE = "oracle"


@dataclass(frozen=True)
class SelectionResult:
    """Chosen dimension plus an audit trail.

    For AIC/GCV ``trace`` maps each candidate J to its criterion value and
    ``skipped`` maps rejected candidates to a reason. For LASSO ``trace``
    holds the penalty grid, nonzero counts and CV losses.
    """

    selector: Selector
    J_hat: int
    trace: Dict = field(default_factory=dict)
    skipped: Dict = field(default_factory=dict)

    @property
    def J_fit(self) -> int:
        """Dimension used for the final unpenalised fit (at least 4)."""
        return max(int(self.J_hat), 4)


def _n_params(J, sample, with_intermediate):
    blocks = 1 + (sample.horizon if with_intermediate and sample.has_future else 0)
    return J * blocks + sample.controls.shape[1]


def candidate_ssr(sample: RegressionSample, J: int, with_intermediate: bool = False):
    """Fit one candidate dimension; returns (effective J, K_J, SSR).

    Coefficients come from a Cholesky solve of the column-equilibrated Gram
    matrix; the SSR uses explicit residuals.
    """
    basis = sample_basis(sample, J, with_intermediate)
    D = build_design(sample, basis, with_intermediate).matrix
    if D.shape[0] <= D.shape[1]:
        raise DesignError(f"need more rows than columns at J={J}")
    y = sample.response
    G = D.T @ D
    c = D.T @ y
    d = np.sqrt(np.diag(G))
    if np.any(d == 0):
        raise RankError("design has all-zero columns", np.flatnonzero(d == 0).tolist())
    Gs = G / np.outer(d, d)
    ev = np.linalg.eigvalsh(Gs)
    if ev[0] <= GRAM_TOL * ev[-1]:
        raise RankError(f"rank-deficient design at J={J}")
    theta = sla.cho_solve(sla.cho_factor(Gs), c / d) / d
    r = y - D @ theta
    K = _n_params(basis.J, sample, with_intermediate)
    return basis.J, K, float(r @ r)


def _select_ic(sample, candidates, with_intermediate, criterion, selector):
    candidates = sorted(set(int(j) for j in candidates))
    if not candidates:
        raise ConfigError("empty candidate set")
    if candidates[0] < 4:
        raise ConfigError(f"candidate dimensions must be >= 4, got {candidates[0]}")
    n = sample.n
    trace, skipped = {}, {}
    for J in candidates:
        try:
            J_eff, K, ssr = candidate_ssr(sample, J, with_intermediate)
        except (RankError, BasisError, DesignError) as exc:
            log.warning("%s: candidate J=%d skipped: %s", selector.value, J, exc)
            skipped[J] = str(exc)
            continue
        value = criterion(ssr, n, K)
        if value is None:
            skipped[J] = f"K_J={K} >= n={n}"
            log.warning("%s: candidate J=%d skipped: K_J >= n", selector.value, J)
            continue
        trace[J] = value
    if not trace:
        raise SelectionError(f"{selector.value}: every candidate was skipped")
    # ties toward the smaller J: candidates are visited in increasing order
    best = min(trace, key=lambda j: (trace[j], j))
    return SelectionResult(selector, best, trace, skipped)


def _aic(ssr, n, K):
    if ssr <= 0:
        return -np.inf
    return n * np.log(ssr / n) + 2.0 * K


def _gcv(ssr, n, K):
    if K >= n:
        return None
    return ssr / (n * (1.0 - K / n) ** 2)


def select_aic(sample, candidates: Iterable[int] = DEFAULT_CANDIDATES, with_intermediate: bool = False):
    """AIC_h(J) = n log(SSR/n) + 2 K_J, minimised over ``candidates``.

    K_J counts every fitted coefficient, intermediate blocks included.
    """
    return _select_ic(sample, candidates, with_intermediate, _aic, Selector.AIC)


def select_gcv(sample, candidates: Iterable[int] = DEFAULT_CANDIDATES, with_intermediate: bool = False):
    """GCV_h(J) = SSR / (n (1 - K_J/n)^2); candidates with K_J >= n are skipped."""
    return _select_ic(sample, candidates, with_intermediate, _gcv, Selector.GCV)


def select_oracle(J_fixed: int) -> SelectionResult:
    J_fixed = int(J_fixed)
    if J_fixed < 4:
        raise ConfigError(f"oracle dimension must be >= 4, got {J_fixed}")
    return SelectionResult(Selector.ORACLE, J_fixed, {J_fixed: None})


def time_block_folds(time: np.ndarray, n_folds: int):
    """Contiguous base-time blocks; returns a fold label per row."""
    periods = np.unique(time)
    if n_folds < 2 or n_folds > periods.size:
        raise ConfigError(f"need 2 <= folds <= {periods.size}, got {n_folds}")
    label = np.empty(periods.size, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(np.arange(periods.size), n_folds)):
        label[chunk] = f
    return label[np.searchsorted(periods, time)]


def select_lasso(sample: RegressionSample, J_lasso: int = 50, folds: int = 5,
                 with_intermediate: bool = False, n_lambda: int = 50,
                 lambda_min_ratio: float = 1e-4, tol: float = 1e-7) -> SelectionResult:
    """Cross-validated LASSO on a ``J_lasso``-dimensional design.

    Columns are scaled to unit root-mean-square (no centring, no intercept)
    and every coefficient is penalised. The penalty minimising the mean
    out-of-fold SSE over contiguous time blocks is refit on the full sample;
    ``J_hat`` is the number of nonzero base sieve coefficients there.
    """
    if J_lasso < 4:
        raise ConfigError(f"J_lasso must be >= 4, got {J_lasso}")
    basis = sample_basis(sample, J_lasso, with_intermediate)
    J = basis.J
    D = build_design(sample, basis, with_intermediate).matrix
    y = sample.response
    n = sample.n
    scale = np.sqrt(np.einsum("ij,ij->j", D, D) / n)
    scale[scale == 0] = 1.0
    D = D / scale

    label = time_block_folds(sample.time, folds)
    G_f, c_f, yy_f, n_f = [], [], [], []
    for f in range(folds):
        rows = np.flatnonzero(label == f)
        Df = D[rows]
        G_f.append(Df.T @ Df)
        c_f.append(Df.T @ y[rows])
        yy_f.append(float(y[rows] @ y[rows]))
        n_f.append(rows.size)
    G_all, c_all = sum(G_f), sum(c_f)

    lam_hi = lambda_max(c_all / n)
    lambdas = lam_hi * np.geomspace(1.0, lambda_min_ratio, n_lambda)
    cv = np.zeros(n_lambda)
    for f in range(folds):
        n_tr = n - n_f[f]
        Gt = (G_all - G_f[f]) / n_tr
        ct = (c_all - c_f[f]) / n_tr
        path = lasso_path(Gt, ct, lambdas, tol=tol)
        # out-of-fold SSE via the fold's Gram form
        sse = yy_f[f] - 2.0 * path @ c_f[f] + np.einsum("lj,jk,lk->l", path, G_f[f], path)
        cv += sse
    cv /= folds
    best = int(np.argmin(cv))
    full_path = lasso_path(G_all / n, c_all / n, lambdas, tol=tol)
    beta = full_path[best]
    nonzero = (full_path[:, :J] != 0).sum(axis=1)
    J_hat = int(nonzero[best])
    trace = {
        "lambdas": lambdas,
        "nonzero": nonzero,
        "cv_loss": cv,
        "lambda_hat": float(lambdas[best]),
        "beta_hat": beta,
        "J_lasso": J,
        "gram": G_all / n,
        "xty": c_all / n,
    }
    return SelectionResult(Selector.LASSO, J_hat, trace)


def select_dimension(sample: RegressionSample, selector, *, candidates=DEFAULT_CANDIDATES,
                     with_intermediate: bool = False, oracle_J: Optional[int] = None,
                     J_lasso: int = 50, folds: int = 5) -> SelectionResult:
    selector = Selector(selector)
    if selector is Selector.AIC:
        return select_aic(sample, candidates, with_intermediate)
    if selector is Selector.GCV:
        return select_gcv(sample, candidates, with_intermediate)
    if selector is Selector.LASSO:
        return select_lasso(sample, J_lasso, folds, with_intermediate)
    if oracle_J is None:
        raise ConfigError("oracle selector requires a fixed dimension")
    return select_oracle(oracle_J)
