"""Cyclic coordinate descent for the l1-penalised least-squares path.

Works on the Gram form: with G = X'X/n and c = X'y/n the objective is
0.5 b'Gb - c'b + lam * |b|_1, equivalent to (1/2n)|y - Xb|^2 + lam |b|_1.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import ConvergenceError

__all__ = ["lasso_cd", "lasso_path", "lambda_max", "kkt_violation"]

MAX_SWEEPS = 100_000


@njit(cache=True)
def _cd(G, c, lam, beta, tol, max_sweeps):
    p = beta.shape[0]
    grad = c - G @ beta  # c - G b
    for sweep in range(max_sweeps):
        max_step = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            rho = grad[j] + gjj * old
            if rho > lam:
                new = (rho - lam) / gjj
            elif rho < -lam:
                new = (rho + lam) / gjj
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= d * G[k, j]
                if abs(d) > max_step:
                    max_step = abs(d)
        if max_step <= tol:
            return sweep + 1
    return -1


def lasso_cd(G, c, lam, beta0=None, tol=1e-7, max_sweeps=MAX_SWEEPS):
    """Solve one penalty level; returns (beta, sweeps)."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    beta = np.zeros(c.shape[0]) if beta0 is None else np.array(beta0, dtype=np.float64)
    sweeps = _cd(G, c, float(lam), beta, float(tol), int(max_sweeps))
    if sweeps < 0:
        raise ConvergenceError(f"coordinate descent did not converge in {max_sweeps} sweeps (lambda={lam:g})")
    return beta, sweeps


def lambda_max(c) -> float:
    """Smallest penalty at which every coefficient is zero."""
    return float(np.max(np.abs(c)))


def lasso_path(G, c, lambdas, tol=1e-7, max_sweeps=MAX_SWEEPS):
    """Warm-started solutions over a decreasing penalty grid; (len(lambdas), p) array."""
    out = np.empty((len(lambdas), len(c)))
    beta = np.zeros(len(c))
    for i, lam in enumerate(lambdas):
        beta, _ = lasso_cd(G, c, lam, beta, tol=tol, max_sweeps=max_sweeps)
        out[i] = beta
    return out


def kkt_violation(G, c, beta, lam) -> float:
    """Largest violation of the lasso optimality conditions.

    Active coordinates need gradient = lam * sign(beta_j); inactive ones
    need |gradient| <= lam.
    """
    grad = np.asarray(c) - np.asarray(G) @ beta
    active = beta != 0
    v_act = np.abs(grad[active] - lam * np.sign(beta[active]))
    v_in = np.maximum(np.abs(grad[~active]) - lam, 0.0)
    return float(max(v_act.max(initial=0.0), v_in.max(initial=0.0)))
