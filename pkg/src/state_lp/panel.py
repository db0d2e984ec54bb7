"""Balanced micro-macro panels: CSV ingestion and horizon-aligned samples."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
import re
from dataclasses import dataclass, field
from typing import IO, Optional, Sequence, Union

import numpy as np

from .errors import (
    BalanceError,
    HorizonError,
    IngestError,
    InputError,
    ShockInconsistency,
)

__all__ = [
    "PanelSchema",
    "PanelDataset",
    "OutcomeMode",
    "RegressionSample",
    "load_panel",
    "write_panel",
    "build_regression_sample",
]

_CONTROL_RE = re.compile(r"^w(\d+)$")


@dataclass(frozen=True)
class PanelSchema:
    """Column-name mapping for panel CSV files.

    ``controls=None`` picks up every ``w<k>`` column in numeric order.
    ``extra`` names further per-cell columns (e.g. aggregation weights) that
    are loaded into ``PanelDataset.extra`` but not used as regressors.
    """

    unit: str = "unit"
    time: str = "time"
    outcome: str = "y"
    shock: str = "x"
    state: str = "z"
    controls: Optional[Sequence[str]] = None
    extra: Sequence[str] = ()


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel of unit outcomes, states and controls plus one common shock.

    Attributes
    ----------
    unit_ids : tuple of str
        Unit identifiers, length N.
    time_index : np.ndarray
        Consecutive integer period labels, length T.
    outcome : np.ndarray
        (N, T) outcomes Y_it.
    shock : np.ndarray
        (T,) aggregate shock X_t.
    state : np.ndarray
        (N, T) states Z_it.
    controls : np.ndarray
        (N, T, Q) controls W_it; Q may be 0.
    extra : dict of str to np.ndarray
        Further (N, T) columns carried alongside the panel.
    """

    unit_ids: tuple
    time_index: np.ndarray
    outcome: np.ndarray
    shock: np.ndarray
    state: np.ndarray
    controls: np.ndarray
    control_names: tuple = field(default=())
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        N, T = self.outcome.shape
        if N < 1 or T < 2:
            raise InputError(f"panel needs N >= 1 and T >= 2, got N={N}, T={T}")
        if len(self.unit_ids) != N or self.time_index.shape != (T,):
            raise InputError("identifier lengths do not match data shape")
        if self.shock.shape != (T,) or self.state.shape != (N, T):
            raise InputError("shock/state shapes do not match outcome shape")
        if self.controls.ndim != 3 or self.controls.shape[:2] != (N, T):
            raise InputError("controls must have shape (N, T, Q)")
        for name in ("outcome", "shock", "state", "controls"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite values")
            arr.flags.writeable = False
        for name, arr in self.extra.items():
            if arr.shape != (N, T) or not np.all(np.isfinite(arr)):
                raise InputError(f"extra column {name!r} must be finite with shape (N, T)")
            arr.flags.writeable = False
        if not self.control_names:
            names = tuple(f"w{k + 1}" for k in range(self.controls.shape[2]))
            object.__setattr__(self, "control_names", names)

    @property
    def N(self) -> int:
        return self.outcome.shape[0]

    @property
    def T(self) -> int:
        return self.outcome.shape[1]

    @property
    def Q(self) -> int:
        return self.controls.shape[2]

    @classmethod
    def from_arrays(cls, outcome, shock, state, controls=None, unit_ids=None,
                    time_index=None, control_names=()):
        outcome = np.array(outcome, dtype=float)
        N, T = outcome.shape
        if controls is None:
            controls = np.zeros((N, T, 0))
        controls = np.array(controls, dtype=float)
        if controls.ndim == 2:
            controls = controls[:, :, None]
        if unit_ids is None:
            unit_ids = tuple(str(i + 1) for i in range(N))
        if time_index is None:
            time_index = np.arange(1, T + 1)
        return cls(
            unit_ids=tuple(str(u) for u in unit_ids),
            time_index=np.asarray(time_index, dtype=np.int64),
            outcome=outcome,
            shock=np.array(shock, dtype=float),
            state=np.array(state, dtype=float),
            controls=controls,
            control_names=tuple(control_names),
        )


def _open_text(source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _parse_float(text, line, column):
    text = text.strip()
    if not text:
        raise IngestError(line, column)
    try:
        value = float(text)
    except ValueError:
        raise IngestError(line, column) from None
    if not math.isfinite(value):
        raise IngestError(line, column, "non-finite value")
    return value


def _parse_int(text, line, column):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        value = _parse_float(text, line, column)
        if value != int(value):
            raise IngestError(line, column, "time must be an integer") from None
        return int(value)


def _unit_sort_key(ids):
    try:
        numeric = [int(u) for u in ids]
    except ValueError:
        return sorted(ids)
    return [u for _, u in sorted(zip(numeric, ids))]


def load_panel(source: Union[str, os.PathLike, bytes, IO], schema: Optional[PanelSchema] = None) -> PanelDataset:
    """Read a long-format panel CSV into a balanced :class:`PanelDataset`.

    Parameters
    ----------
    source : path, bytes or file-like
        UTF-8 delimited text with a header row.
    schema : PanelSchema, optional
        Column mapping; defaults to ``unit,time,y,x,z[,w1..wQ]``.

    Raises
    ------
    IngestError
        Missing, non-numeric or duplicate cells (reports the file line and column).
    ShockInconsistency
        The shock takes different values across units within one period.
    BalanceError
        Some (unit, time) cell is absent.
    """
    schema = schema or PanelSchema()
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(1, "<header>", "empty file") from None
        if schema.controls is None:
            found = [(int(m.group(1)), h) for h in header if (m := _CONTROL_RE.match(h))]
            control_cols = [h for _, h in sorted(found)]
        else:
            control_cols = list(schema.controls)
        extra_cols = list(schema.extra)
        required = ([schema.unit, schema.time, schema.outcome, schema.shock, schema.state]
                    + control_cols + extra_cols)
        pos = {}
        for name in required:
            if name not in header:
                raise IngestError(1, name, "column not found in header")
            pos[name] = header.index(name)

        cells = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            unit = row[pos[schema.unit]].strip()
            if not unit:
                raise IngestError(line, schema.unit)
            t = _parse_int(row[pos[schema.time]], line, schema.time)
            values = [_parse_float(row[pos[c]], line, c)
                      for c in [schema.outcome, schema.shock, schema.state] + control_cols + extra_cols]
            if (unit, t) in cells:
                raise IngestError(line, schema.time, f"duplicate cell for unit {unit!r}")
            cells[(unit, t)] = (line, values)
    finally:
        if isinstance(source, (str, os.PathLike)):
            fh.close()

    if not cells:
        raise IngestError(2, "<data>", "no data rows")
    units = _unit_sort_key(sorted({u for u, _ in cells}))
    times = sorted({t for _, t in cells})
    if times != list(range(times[0], times[0] + len(times))):
        raise InputError(f"time periods must be consecutive integers, got {times[:5]}...")
    missing = [(u, t) for u in units for t in times if (u, t) not in cells]
    if missing:
        raise BalanceError(missing)

    N, T, Q = len(units), len(times), len(control_cols)
    data = np.empty((N, T, 3 + Q + len(extra_cols)))
    for i, u in enumerate(units):
        for j, t in enumerate(times):
            data[i, j] = cells[(u, t)][1]
    shock_panel = data[:, :, 1]
    for j, t in enumerate(times):
        col = shock_panel[:, j]
        if np.any(col != col[0]):
            raise ShockInconsistency(t, col.tolist())

    return PanelDataset(
        unit_ids=tuple(units),
        time_index=np.array(times, dtype=np.int64),
        outcome=data[:, :, 0].copy(),
        shock=shock_panel[0].copy(),
        state=data[:, :, 2].copy(),
        controls=data[:, :, 3:3 + Q].copy(),
        control_names=tuple(control_cols),
        extra={c: data[:, :, 3 + Q + k].copy() for k, c in enumerate(extra_cols)},
    )


def write_panel(panel: PanelDataset, dest, schema: Optional[PanelSchema] = None) -> None:
    """Write ``panel`` as long-format CSV readable by :func:`load_panel`.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    schema = schema or PanelSchema()
    control_cols = list(schema.controls) if schema.controls is not None else list(panel.control_names)
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(fh, lineterminator="\n")
        extra_cols = list(panel.extra)
        writer.writerow([schema.unit, schema.time, schema.outcome, schema.shock, schema.state]
                        + control_cols + extra_cols)
        for i, u in enumerate(panel.unit_ids):
            for j, t in enumerate(panel.time_index):
                row = [u, int(t), repr(float(panel.outcome[i, j])), repr(float(panel.shock[j])),
                       repr(float(panel.state[i, j]))]
                row += [repr(float(v)) for v in panel.controls[i, j]]
                row += [repr(float(panel.extra[c][i, j])) for c in extra_cols]
                writer.writerow(row)
    finally:
        if own:
            fh.close()


class OutcomeMode(str, enum.Enum):
    """Dependent variable of the horizon-h projection."""

    LEVEL = "level"
    CUM_T = "cum-t"      # Y_{t+h} - Y_t
    CUM_T1 = "cum-t1"    # Y_{t+h} - Y_{t-1}


@dataclass(frozen=True)
class RegressionSample:
    """Rows (i, t) usable at horizon h, ordered by base time then unit.

    ``time`` holds the 1-based position of the base period t within the
    panel; the earliest usable base time is 2 so that Z_{i,t-1} is observed.
    """

    horizon: int
    mode: OutcomeMode
    unit: np.ndarray
    time: np.ndarray
    response: np.ndarray
    state: np.ndarray
    shock: np.ndarray
    controls: np.ndarray
    future_shock: Optional[np.ndarray] = None
    future_state: Optional[np.ndarray] = None
    n_units: int = 0

    @property
    def n(self) -> int:
        return self.response.shape[0]

    @property
    def window(self) -> int:
        return self.n // self.n_units

    @property
    def has_future(self) -> bool:
        return self.future_shock is not None


def build_regression_sample(panel: PanelDataset, h: int, mode: OutcomeMode = OutcomeMode.LEVEL,
                            with_intermediate: bool = False) -> RegressionSample:
    """Align outcomes at t+h with states, shocks and controls dated t-1 / t.

    With ``with_intermediate`` and ``h >= 1`` the sample also carries the
    future shocks X_{t+s} and states Z_{i,t+s-1} for s = 1..h.
    """
    h = int(h)
    mode = OutcomeMode(mode)
    N, T = panel.N, panel.T
    if h < 0:
        raise HorizonError(f"horizon must be nonnegative, got {h}")
    if h > T - 2:
        raise HorizonError(f"horizon {h} too large for T={T} (need h <= T-2)")
    # 0-based base positions p = t-1 for t = 2..T-h
    base = np.arange(1, T - h)
    if base.size == 0:
        raise HorizonError(f"empty base-time window at horizon {h}")
    W = base.size
    unit = np.tile(np.arange(N), W)
    pos = np.repeat(base, N)

    Y = panel.outcome
    response = Y[unit, pos + h]
    if mode is OutcomeMode.CUM_T:
        response = response - Y[unit, pos]
    elif mode is OutcomeMode.CUM_T1:
        response = response - Y[unit, pos - 1]

    future_shock = future_state = None
    if with_intermediate and h >= 1:
        s = np.arange(1, h + 1)
        future_shock = panel.shock[pos[:, None] + s[None, :]]
        future_state = panel.state[unit[:, None], pos[:, None] + s[None, :] - 1]

    return RegressionSample(
        horizon=h,
        mode=mode,
        unit=unit,
        time=pos + 1,
        response=np.ascontiguousarray(response, dtype=float),
        state=panel.state[unit, pos - 1],
        shock=panel.shock[pos],
        controls=panel.controls[unit, pos - 1, :],
        future_shock=future_shock,
        future_state=future_state,
        n_units=N,
    )
