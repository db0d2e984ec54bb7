"""Weighted-derivative representation of the linear interaction slope.

The slope of a linear interaction projection (alpha + beta z) X equals
int omega(z) g'(z) dz, with weight

    omega(z) = Cov(X 1{Z >= z}, Z X) / Var(Z X).

The weight integrates to one but can turn negative, so beta can carry the
opposite sign of g' over most of the support.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from .errors import DegenerateError, DomainError, QuadratureError
from .panel import PanelDataset, RegressionSample, build_regression_sample

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 lacks trapezoid

__all__ = [
    "WeightCurve",
    "Estimand",
    "omega_empirical",
    "omega_analytic_example",
    "gprime_analytic_example",
    "simulate_example_law",
    "adaptive_simpson",
    "linear_estimand",
    "sign_changes",
    "positive_intervals",
    "EXAMPLE_DOMAIN",
]

EXAMPLE_DOMAIN = (1.0, 3.0)


@dataclass(frozen=True)
class WeightCurve:
    grid: np.ndarray
    omega: np.ndarray
    integral: float
    sign_changes: Tuple[float, ...]


@dataclass(frozen=True)
class Estimand:
    """Quadrature value with its estimated absolute error."""

    value: float
    abserr: float


def sign_changes(grid, values) -> Tuple[float, ...]:
    """Zero crossings of a sampled curve, located by linear interpolation."""
    x = np.asarray(grid, dtype=float)
    f = np.asarray(values, dtype=float)
    roots = []
    s = np.sign(f)
    for k in range(f.size - 1):
        if s[k] == 0 or s[k] * s[k + 1] >= 0:
            continue
        roots.append(float(x[k] - f[k] * (x[k + 1] - x[k]) / (f[k + 1] - f[k])))
    return tuple(roots)


def positive_intervals(f: Callable, domain, n: int = 2001) -> List[Tuple[float, float]]:
    """Approximate sub-intervals of ``domain`` where ``f`` is positive."""
    x = np.linspace(domain[0], domain[1], n)
    pos = np.asarray(f(x)) > 0
    out, start = [], None
    for k in range(n):
        if pos[k] and start is None:
            start = x[k]
        if start is not None and (not pos[k] or k == n - 1):
            end = x[k] if pos[k] else x[k - 1]
            if end > start:
                out.append((float(start), float(end)))
            start = None
    return out


def _pairs(data):
    if isinstance(data, RegressionSample):
        return data.state, data.shock
    if isinstance(data, PanelDataset):
        s = build_regression_sample(data, 0)
        return s.state, s.shock
    z, x = data
    return np.asarray(z, dtype=float).ravel(), np.asarray(x, dtype=float).ravel()


def omega_empirical(data, z_grid) -> WeightCurve:
    """Plug-in weight curve from pooled (Z_{i,t-1}, X_t) pairs.

    ``data`` is a ``RegressionSample``, a ``PanelDataset`` (horizon-0 pairs)
    or a ``(z, x)`` tuple. The integral uses the trapezoid rule on ``z_grid``.
    """
    z, x = _pairs(data)
    zx = z * x
    var = float(np.mean((zx - zx.mean()) ** 2))
    if not var > 1e-14 * max(1.0, float(np.mean(zx**2))):
        raise DegenerateError("Var(Z X) is zero in the sample")
    # Cov(X 1{Z>=z}, ZX) = mean over {Z >= z} of X (ZX - mean ZX), suffix-summed
    contrib = x * (zx - zx.mean())
    order = np.argsort(z, kind="stable")
    zs = z[order]
    tail = np.concatenate([np.cumsum(contrib[order][::-1])[::-1], [0.0]])
    grid = np.asarray(z_grid, dtype=float)
    omega = tail[np.searchsorted(zs, grid, side="left")] / (z.size * var)
    integral = float(_trapezoid(omega, grid))
    return WeightCurve(grid, omega, integral, sign_changes(grid, omega))


def _check_domain(z):
    z = np.asarray(z, dtype=float)
    lo, hi = EXAMPLE_DOMAIN
    if np.any((z < lo) | (z > hi)) or np.any(np.isnan(z)):
        raise DomainError(f"example functions are defined on [{lo}, {hi}]")
    return z


def omega_analytic_example(z):
    """Closed-form weight for Z ~ U[1, 3], X = 4 - Z."""
    z = _check_domain(z)
    return 15.0 / 32.0 * (z - 1) * (3 - z) * (3 * z**2 - 20 * z + 29)


def gprime_analytic_example(z):
    z = _check_domain(z)
    return (z - 1) * (z - 1.5) * (z - 2.5) * (3 - z)


def simulate_example_law(n: int, rng: np.random.Generator):
    """Draws of the worked-example law: Z ~ U[1, 3] and X = 4 - Z.

    X is a deterministic function of Z here, so these pairs are only for
    checking the weight formula, never for inference.
    """
    z = rng.uniform(1.0, 3.0, size=n)
    return z, 4.0 - z


def adaptive_simpson(f: Callable, a: float, b: float, atol: float = 1e-8,
                     max_depth: int = 50, min_depth: int = 3) -> Estimand:
    """Adaptive Simpson quadrature with Richardson correction.

    An interval is accepted when |S_left + S_right - S| <= 15 tol, with the
    tolerance halved at each split; the first ``min_depth`` levels are
    always bisected so a lucky coarse agreement cannot end the search. The returned error is the sum of the
    accepted |S_left + S_right - S| / 15 terms.
    """
    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    fa, fb, fm = float(f(a)), float(f(b)), float(f(0.5 * (a + b)))
    total, err = 0.0, 0.0
    stack = [(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), atol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, whole, tol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl, fr = float(f(0.5 * (lo + mid))), float(f(0.5 * (mid + hi)))
        left = simpson(flo, fl, fmid, mid - lo)
        right = simpson(fmid, fr, fhi, hi - mid)
        delta = left + right - whole
        if not np.isfinite(delta):
            raise QuadratureError(f"non-finite integrand on [{lo}, {hi}]")
        if depth >= min_depth and abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
            err += abs(delta) / 15.0
        elif depth >= max_depth:
            raise QuadratureError(f"no convergence on [{lo}, {hi}] after {max_depth} bisections")
        else:
            stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * tol, depth + 1))
            stack.append((lo, mid, flo, fl, fmid, left, 0.5 * tol, depth + 1))
    return Estimand(total, err)


def linear_estimand(omega: Callable, gprime: Callable, domain, atol: float = 1e-8) -> Estimand:
    """int omega(z) g'(z) dz over ``domain`` by adaptive Simpson quadrature."""
    a, b = float(domain[0]), float(domain[1])
    return adaptive_simpson(lambda t: omega(t) * gprime(t), a, b, atol)
