"""Aggregate responsiveness, run manifests and deterministic file output."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import AggregationError, InputError

__all__ = [
    "AggregateResponse",
    "aggregate_response",
    "centered_moving_average",
    "RunManifest",
    "file_digest",
    "write_csv",
    "write_json",
    "package_versions",
]


def centered_moving_average(values, window: int = 4) -> np.ndarray:
    """Centred rolling mean with NaN where the window is incomplete.

    For an even window the extra point sits on the left, as in
    ``pandas.Series.rolling(window, center=True).mean()``.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    out = np.full(n, np.nan)
    if window < 1 or n < window:
        return out
    # the window ending at k+window-1 is labelled at k + window // 2
    sums = np.convolve(x, np.ones(window), mode="valid") / window
    off = window // 2
    out[off:off + sums.size] = sums
    return out


@dataclass(frozen=True)
class AggregateResponse:
    """Weight-share averages of the unit responses, one value per period.

    ``smoothed`` is the window-4 centred moving average of ``response``.
    """

    periods: np.ndarray
    response: np.ndarray
    smoothed: np.ndarray
    weights_source: str = "weights"


def aggregate_response(fit, states, weights, periods=None, weights_source: str = "weights",
                       window: int = 4) -> AggregateResponse:
    """sum_i (K_i / sum_j K_j) g_h(Z_i) for every period.

    Parameters
    ----------
    fit : LpFit or callable
        Anything with a ``g(z)`` method, or a function of z.
    states, weights : array_like, shape (N, P)
        Unit states Z_{i,t-1} and weights K_{i,t-1}, one column per period.
    """
    Z = np.atleast_2d(np.asarray(states, dtype=float))
    K = np.atleast_2d(np.asarray(weights, dtype=float))
    if Z.shape != K.shape:
        raise InputError(f"states {Z.shape} and weights {K.shape} differ in shape")
    if np.any(K < 0) or not np.all(np.isfinite(K)):
        raise InputError("weights must be finite and nonnegative")
    P = Z.shape[1]
    periods = np.arange(P) if periods is None else np.asarray(periods)
    g = fit.g if hasattr(fit, "g") else fit
    total = K.sum(axis=0)
    for p in range(P):
        if total[p] == 0:
            raise AggregationError(periods[p])
    G = np.asarray(g(Z.ravel()), dtype=float).reshape(Z.shape)
    resp = (K * G).sum(axis=0) / total
    return AggregateResponse(periods, resp, centered_moving_average(resp, window), weights_source)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def package_versions() -> Dict[str, str]:
    from importlib import metadata

    from . import __version__

    out = {"state_lp": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "numba", "threadpoolctl"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "missing"
    return out


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """UTF-8 CSV with ``repr`` floats, so equal numbers give equal bytes."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RunManifest:
    """Provenance record written next to every command's outputs.

    ``outputs`` maps each written file to its sha256 digest; ``inputs`` does
    the same for the files read.
    """

    command: str
    config: dict
    seed: Optional[int]
    argv: List[str] = field(default_factory=lambda: list(sys.argv))
    versions: Dict[str, str] = field(default_factory=package_versions)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seconds: float = 0.0

    def add_input(self, path) -> None:
        self.inputs[os.fspath(path)] = file_digest(path)

    def add_output(self, path) -> None:
        self.outputs[os.path.basename(path)] = file_digest(path)

    def write(self, path) -> None:
        write_json(path, {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "argv": self.argv,
            "versions": self.versions,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seconds": self.seconds,
        })
