"""Simulation designs, true responses, error metrics and the replication driver."""

from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, MetricError, StateLPError, StudyError
from .estimator import fit_linear_lp, fit_sieve
from .inference import irf_curve
from .panel import OutcomeMode, PanelDataset, build_regression_sample
from .rng import derive_seed, stream
from .selection import DEFAULT_CANDIDATES, Selector, select_dimension

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 lacks trapezoid

__all__ = [
    "g_cubic",
    "g_fourier",
    "DgpKind",
    "DgpSpec",
    "McConfig",
    "McResult",
    "simulate_dgp",
    "true_irf",
    "rimse",
    "coverage_and_width",
    "run_replication",
    "run_study",
    "load_config",
    "parse_config",
    "parse_int_list",
]

log = logging.getLogger(__name__)


def g_cubic(z):
    z = np.asarray(z, dtype=float)
    return 0.5 * z + 0.3 * z**2 - 0.25 * z**3


def g_fourier(z):
    """Trigonometric response on the state rescaled by (z + 4.65) / 9.3."""
    u = (np.asarray(z, dtype=float) + 4.65) / 9.3
    return (0.8 * np.sin(2 * np.pi * u) + 2 * np.cos(2 * np.pi * u)
            - 0.5 * np.sin(4 * np.pi * u) + np.cos(4 * np.pi * u))


class DgpKind(str, enum.Enum):
    DGP1 = "dgp1"   # linear shock, constant propagation
    DGP2 = "dgp2"   # shock-dependent propagation
    DGP3 = "dgp3"   # nonlinear in the shock


@dataclass(frozen=True)
class DgpSpec:
    """Simulation law. ``g`` is ``"cubic"``, ``"fourier"`` or polynomial coefficients (constant first)."""

    kind: DgpKind = DgpKind.DGP1
    g: object = "cubic"
    rho: float = 0.8
    mu_var: float = 3.0
    xi_ar: float = 0.8
    xi_innov_sd: float = math.sqrt(1 - 0.8**2)
    burn_in: int = 500

    def __post_init__(self):
        object.__setattr__(self, "kind", DgpKind(self.kind))
        if not abs(self.rho) < 1 or not abs(self.xi_ar) < 1:
            raise ConfigError("persistence parameters must be below 1 in absolute value")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be nonnegative")
        if isinstance(self.g, list):
            object.__setattr__(self, "g", tuple(self.g))

    def g_func(self) -> Callable:
        if callable(self.g):
            return self.g
        if self.g == "cubic":
            return g_cubic
        if self.g == "fourier":
            return g_fourier
        if self.g == "zero":
            return lambda z: np.zeros_like(np.asarray(z, dtype=float))
        coefs = np.asarray(self.g, dtype=float)
        return lambda z: np.polynomial.polynomial.polyval(np.asarray(z, dtype=float), coefs)


def simulate_dgp(spec: DgpSpec, N: int, T: int, seed: int) -> PanelDataset:
    """Simulate ``burn_in + T`` periods and keep the last T.

    The single control column is the outcome itself, so the sample's
    W_{i,t-1} is the lagged outcome Y_{i,t-1}.
    """
    if N < 1 or T < 1:
        raise ConfigError("N and T must be positive")
    g = spec.g_func()
    rng = stream(seed)
    P = spec.burn_in + T
    mu = rng.standard_normal(N) * math.sqrt(spec.mu_var)
    xi = rng.standard_normal(N) * (spec.xi_innov_sd / math.sqrt(1 - spec.xi_ar**2))
    X = rng.standard_normal(P + 1)
    eps = rng.standard_normal((P + 1, N))
    v = rng.standard_normal((P + 1, N))

    Y = np.zeros((N, P + 1))
    Z = np.zeros((N, P + 1))
    Z[:, 0] = mu + xi
    for s in range(1, P + 1):
        xi = spec.xi_ar * xi + spec.xi_innov_sd * v[s]
        Z[:, s] = mu + xi
        if spec.kind is DgpKind.DGP2:
            rho = 0.5 + 0.3 * math.tanh(X[s - 1])
            Y[:, s] = g(Z[:, s - 1]) * X[s] + rho * Y[:, s - 1] + eps[s]
        elif spec.kind is DgpKind.DGP3:
            Y[:, s] = g(Z[:, s - 1]) * X[s] + 0.3 * X[s] ** 2 + spec.rho * Y[:, s - 1] + eps[s]
        else:
            Y[:, s] = g(Z[:, s - 1]) * X[s] + spec.rho * Y[:, s - 1] + eps[s]
    keep = slice(spec.burn_in + 1, P + 1)
    y = Y[:, keep]
    return PanelDataset.from_arrays(outcome=y, shock=X[keep], state=Z[:, keep],
                                    controls=y[:, :, None], control_names=("w1",))


def true_irf(g, h: int, delta, z, rho: float = 0.8):
    """rho^h g(z) delta."""
    if h < 0:
        raise ConfigError("horizon must be nonnegative")
    g = g if callable(g) else DgpSpec(g=g).g_func()
    return rho**h * g(z) * delta


def rimse(per_rep_curves, truth_curve, grid, delta: float = 1.0) -> float:
    """sqrt of the trapezoid integral over ``grid`` of the replication-mean squared error.

    Curves and truth are per unit shock; ``delta`` scales both.
    """
    curves = np.atleast_2d(np.asarray(per_rep_curves, dtype=float))
    grid = np.asarray(grid, dtype=float)
    truth = np.broadcast_to(np.asarray(truth_curve, dtype=float), grid.shape) if np.ndim(truth_curve) == 0 \
        else np.asarray(truth_curve, dtype=float)
    if curves.shape[1] != grid.size or truth.shape[-1] != grid.size:
        raise MetricError("curves, truth and grid must share the grid length")
    mse = np.mean(((curves - truth) * delta) ** 2, axis=0)
    return float(np.sqrt(_trapezoid(mse, grid)))


def coverage_and_width(lo, hi, truth) -> Tuple[float, float]:
    """Fraction of replications whose band contains the truth at every grid point, and mean width."""
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if lo.shape != hi.shape or truth.shape[-1] != lo.shape[1]:
        raise MetricError("bands and truth must share the grid")
    inside = np.all((lo <= truth) & (truth <= hi), axis=1)
    return float(inside.mean()), float(np.mean(hi - lo))


@dataclass(frozen=True)
class McConfig:
    """Design of a replication study; see ``load_config`` for the file keys."""

    reps: int = 100
    Ns: Tuple[int, ...] = (500,)
    Ts: Tuple[int, ...] = (200,)
    horizons: Tuple[int, ...] = (0,)
    deltas: Tuple[float, ...] = (1.0,)
    selectors: Tuple[str, ...] = ("aic",)
    B: int = 2000
    alpha: float = 0.05
    grid_points: int = 500
    band_range: Optional[Tuple[float, float]] = None
    rimse_grid: Tuple[float, float, int] = (-4.65, 4.65, 500)
    with_intermediate: bool = True
    linear: bool = True
    bands: bool = True
    seed: int = 20240101
    dgp: DgpSpec = field(default_factory=DgpSpec)
    oracle_J: int = 4
    candidates: Tuple[int, ...] = DEFAULT_CANDIDATES
    J_lasso: int = 50
    folds: int = 5
    threads: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if any(d <= 0 for d in self.deltas):
            raise ConfigError("deltas must be positive")
        for s in self.selectors:
            Selector(s)
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


@dataclass
class McResult:
    """Aggregated tables plus per-replication records.

    rimse: {(N, T, h, delta, estimator): value}
    coverage: {(selector, N, T, h): (coverage, mean width)}
    """

    rimse: Dict[tuple, float]
    coverage: Dict[tuple, Tuple[float, float]]
    records: List[dict]
    failures: int
    config: McConfig

    def rimse_rows(self):
        return [dict(N=k[0], T=k[1], h=k[2], delta=k[3], estimator=k[4], rimse=v)
                for k, v in sorted(self.rimse.items(), key=lambda kv: tuple(map(str, kv[0])))]

    def coverage_rows(self):
        return [dict(selector=k[0], N=k[1], T=k[2], h=k[3], coverage=v[0], width=v[1])
                for k, v in sorted(self.coverage.items(), key=lambda kv: tuple(map(str, kv[0])))]


def run_replication(config: McConfig, N: int, T: int, rep: int) -> dict:
    """One replication: simulate, then per horizon select, fit and evaluate."""
    spec = config.dgp
    g = spec.g_func()
    panel = simulate_dgp(spec, N, T, derive_seed(config.seed, rep, N, T))
    lo, hi, m = config.rimse_grid
    rgrid = np.linspace(lo, hi, int(m))
    out = {"rep": rep, "N": N, "T": T, "curves": {}, "bands": {}, "J": {}}
    for h in config.horizons:
        sample = build_regression_sample(panel, h, OutcomeMode.LEVEL, config.with_intermediate)
        truth_r = true_irf(g, h, 1.0, rgrid, spec.rho)
        for si, sel_name in enumerate(config.selectors):
            sel = select_dimension(sample, sel_name, candidates=config.candidates,
                                   with_intermediate=config.with_intermediate,
                                   oracle_J=config.oracle_J, J_lasso=config.J_lasso,
                                   folds=config.folds)
            fit = fit_sieve(sample, sel.J_fit, config.with_intermediate)
            out["J"][(sel_name, h)] = int(sel.J_hat)
            out["curves"][(f"sieve-{sel_name}", h)] = fit.g(rgrid) - truth_r
            if config.bands:
                if config.band_range is None:
                    zlo, zhi = sample.state.min(), sample.state.max()
                else:
                    zlo, zhi = config.band_range
                zgrid = np.linspace(zlo, zhi, config.grid_points)
                curve = irf_curve(fit, zgrid, B=config.B, alpha=config.alpha, delta=1.0,
                                  seed=derive_seed(config.seed, rep, N, T, h, si))
                truth = true_irf(g, h, 1.0, zgrid, spec.rho)
                covered = bool(np.all((curve.band_lo <= truth) & (truth <= curve.band_hi)))
                out["bands"][(sel_name, h)] = (covered, curve.band_width)
        if config.linear:
            lin = fit_linear_lp(sample)
            out["curves"][("linear", h)] = lin.irf(rgrid) - truth_r
    return out


def _worker(args):
    config, N, T, rep = args
    from threadpoolctl import threadpool_limits

    with threadpool_limits(1):
        try:
            return run_replication(config, N, T, rep)
        except StateLPError as exc:
            return {"rep": rep, "N": N, "T": T, "error": f"{type(exc).__name__}: {exc}"}


def run_study(config: McConfig, threads: Optional[int] = None) -> McResult:
    """Run every replication of every (N, T) cell and aggregate.

    Replication r of cell (N, T) always uses the seed derived from
    (master seed, r, N, T); tables are reduced in replication order, so the
    result does not depend on ``threads``.
    """
    threads = config.threads if threads is None else int(threads)
    tasks = [(config, N, T, r) for N in config.Ns for T in config.Ts for r in range(config.reps)]
    if threads <= 1:
        results = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, tasks, chunksize=1))
    results.sort(key=lambda r: (r["N"], r["T"], r["rep"]))

    failed = [r for r in results if "error" in r]
    for r in failed:
        log.warning("replication %d (N=%d, T=%d) failed: %s", r["rep"], r["N"], r["T"], r["error"])
    if len(failed) > 0.05 * len(results):
        raise StudyError(f"{len(failed)} of {len(results)} replications failed")
    ok = [r for r in results if "error" not in r]
    if not ok:
        raise StudyError("no successful replications")

    lo, hi, m = config.rimse_grid
    rgrid = np.linspace(lo, hi, int(m))
    estimators = [f"sieve-{s}" for s in config.selectors] + (["linear"] if config.linear else [])
    rimse_tab, cov_tab, records = {}, {}, []
    for N in config.Ns:
        for T in config.Ts:
            cell = [r for r in ok if r["N"] == N and r["T"] == T]
            if not cell:
                continue
            for h in config.horizons:
                for est in estimators:
                    errs = np.array([r["curves"][(est, h)] for r in cell])
                    for d in config.deltas:
                        rimse_tab[(N, T, h, float(d), est)] = rimse(errs, np.zeros(rgrid.size), rgrid, d)
                if config.bands:
                    for s in config.selectors:
                        flags = [r["bands"][(s, h)] for r in cell]
                        cov_tab[(s, N, T, h)] = (float(np.mean([f[0] for f in flags])),
                                                 float(np.mean([f[1] for f in flags])))
            for r in cell:
                for (s, h), J in sorted(r["J"].items()):
                    rec = {"N": N, "T": T, "rep": r["rep"], "selector": s, "h": h, "J_hat": J}
                    if config.bands:
                        rec["covered"], rec["width"] = r["bands"][(s, h)]
                    records.append(rec)
    return McResult(rimse=rimse_tab, coverage=cov_tab, records=records,
                    failures=len(failed), config=config)


# -- configuration files ----------------------------------------------------

def parse_int_list(v):
    v = v.strip()
    if "-" in v and "," not in v and not v.startswith("-"):
        a, b = v.split("-")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(x) for x in v.split(",") if x.strip())


def _floats(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _flag(v):
    v = v.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(v)


def _grid3(v):
    lo, hi, m = v.split(":")
    return (float(lo), float(hi), int(m))


_KEYS = {
    "reps": ("reps", int),
    "n": ("Ns", parse_int_list),
    "t": ("Ts", parse_int_list),
    "horizons": ("horizons", parse_int_list),
    "deltas": ("deltas", _floats),
    "selectors": ("selectors", lambda v: tuple(s.strip().lower() for s in v.split(",") if s.strip())),
    "b": ("B", int),
    "bootstrap": ("B", int),
    "alpha": ("alpha", float),
    "grid_points": ("grid_points", int),
    "rimse_grid": ("rimse_grid", _grid3),
    "band_range": ("band_range", lambda v: None if v.strip().lower() == "sample" else _floats(v)),
    "intermediate": ("with_intermediate", _flag),
    "linear": ("linear", _flag),
    "bands": ("bands", _flag),
    "seed": ("seed", int),
    "oracle_j": ("oracle_J", int),
    "candidates": ("candidates", parse_int_list),
    "j_lasso": ("J_lasso", int),
    "folds": ("folds", int),
    "threads": ("threads", int),
}
_DGP_KEYS = {
    "dgp": ("kind", lambda v: DgpKind(v.strip().lower())),
    "g": ("g", lambda v: v.strip().lower() if v.strip().lower() in ("cubic", "fourier", "zero") else _floats(v)),
    "rho": ("rho", float),
    "burn_in": ("burn_in", int),
}


def parse_config(text: str, overrides: Optional[dict] = None) -> McConfig:
    """Parse ``key = value`` lines (``#`` comments); ``overrides`` wins over the file."""
    items = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        items[key.lower()] = value
    for k, v in (overrides or {}).items():
        items[k.lower()] = str(v)
    kwargs, dgp = {}, {}
    for key, value in items.items():
        if key in _KEYS:
            name, conv = _KEYS[key]
            target = kwargs
        elif key in _DGP_KEYS:
            name, conv = _DGP_KEYS[key]
            target = dgp
        else:
            raise ConfigError(f"unknown configuration key: {key}")
        try:
            target[name] = conv(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for key {key}: {value!r}") from exc
    if dgp:
        kwargs["dgp"] = DgpSpec(**dgp)
    try:
        return McConfig(**kwargs)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: Optional[dict] = None) -> McConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)
