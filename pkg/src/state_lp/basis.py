"""Cubic B-spline sieve with interior knots at empirical quantiles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numba import njit

from .errors import BasisError

__all__ = ["BasisSpec", "make_basis", "eval_basis", "fill_weighted_basis"]

DEGREE = 3


@dataclass(frozen=True)
class BasisSpec:
    """Knot layout of a cubic B-spline basis of dimension ``J``.

    ``requested_J`` differs from ``J`` only when tied quantiles were merged.
    """

    J: int
    interior_knots: np.ndarray
    boundary_knots: Tuple[float, float]
    requested_J: int
    degree: int = DEGREE

    @property
    def knots(self) -> np.ndarray:
        a, b = self.boundary_knots
        k = self.degree + 1
        return np.concatenate([np.full(k, a), self.interior_knots, np.full(k, b)])

    def __call__(self, points) -> np.ndarray:
        return eval_basis(self, points)


def make_basis(z_sample, J: int, bounds: Optional[Tuple[float, float]] = None) -> BasisSpec:
    """Build the basis from a state sample.

    Interior knots sit at the type-7 empirical quantiles of ``z_sample`` at
    levels k/(J-3), k = 1..J-4. Boundary knots are the sample range unless
    ``bounds`` widens them. Tied or boundary-coincident quantiles are
    dropped and ``J`` shrinks accordingly.
    """
    J = int(J)
    if J < DEGREE + 1:
        raise BasisError(f"cubic B-spline basis needs J >= 4, got {J}")
    z = np.asarray(z_sample, dtype=float).ravel()
    if z.size == 0 or not np.all(np.isfinite(z)):
        raise BasisError("state sample must be nonempty and finite")
    if np.unique(z).size < J:
        raise BasisError(f"state sample has fewer than J={J} distinct values")
    lo, hi = float(z.min()), float(z.max())
    if bounds is not None:
        lo, hi = min(lo, float(bounds[0])), max(hi, float(bounds[1]))
    if not hi > lo:
        raise BasisError("state sample has zero range")
    n_int = J - 4
    if n_int:
        levels = np.arange(1, n_int + 1) / (J - 3)
        q = np.quantile(z, levels)
        q = np.unique(q[(q > lo) & (q < hi)])
    else:
        q = np.empty(0)
    return BasisSpec(J=q.size + 4, interior_knots=q, boundary_knots=(lo, hi), requested_J=J)


@njit(cache=True)
def _local_basis(t, x, J, p):
    """Span index and the p+1 nonzero basis values at each point."""
    n = x.shape[0]
    span = np.empty(n, dtype=np.int64)
    vals = np.empty((n, p + 1))
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    for i in range(n):
        xi = x[i]
        # t[k] <= x < t[k+1], restricted to p..J-1
        lo, hi = p, J - 1
        if xi >= t[hi]:
            k = hi
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if t[mid] <= xi:
                    lo = mid
                else:
                    hi = mid
            k = lo
        span[i] = k
        vals[i, 0] = 1.0
        for j in range(1, p + 1):
            left[j] = xi - t[k + 1 - j]
            right[j] = t[k + j] - xi
            saved = 0.0
            for r in range(j):
                temp = vals[i, r] / (right[r + 1] + left[j - r])
                vals[i, r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            vals[i, j] = saved
    return span, vals


@njit(cache=True)
def _scatter(out, col0, span, vals, weight, p):
    n = span.shape[0]
    for i in range(n):
        c = col0 + span[i] - p
        w = weight[i]
        for r in range(p + 1):
            out[i, c + r] = vals[i, r] * w


def _prepare(spec, points):
    x = np.atleast_1d(np.asarray(points, dtype=float)).ravel()
    if np.isnan(x).any():
        raise BasisError("NaN in evaluation points")
    a, b = spec.boundary_knots
    return np.ascontiguousarray(np.clip(x, a, b))


def eval_basis(spec: BasisSpec, points) -> np.ndarray:
    """Evaluate all basis functions at ``points``; returns an (n, J) matrix.

    Points outside the boundary knots are clamped to the nearest boundary.
    Values come from the Cox-de Boor recursion; at most four are nonzero
    per row.
    """
    x = _prepare(spec, points)
    span, vals = _local_basis(spec.knots, x, spec.J, spec.degree)
    out = np.zeros((x.size, spec.J))
    _scatter(out, 0, span, vals, np.ones(x.size), spec.degree)
    return out


def fill_weighted_basis(spec: BasisSpec, points, weight, out: np.ndarray, col0: int) -> None:
    """Write phi(points) * weight into ``out[:, col0:col0+J]`` (assumed zeroed)."""
    x = _prepare(spec, points)
    span, vals = _local_basis(spec.knots, x, spec.J, spec.degree)
    _scatter(out, int(col0), span, vals, np.ascontiguousarray(weight, dtype=float), spec.degree)
