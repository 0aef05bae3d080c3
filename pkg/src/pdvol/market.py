"""Daily price series, EWMA reconstruction of Y and the VIX/VVIX regression."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ParseError, ValidationError


@dataclass(frozen=True)
class PriceSeries:
    """Dated positive values on a trading-day clock.

    Dates must be strictly increasing and values strictly positive.  Files are
    required to hold at least two rows (see :func:`load_csv`); derived series
    such as the output of :func:`reconstruct_y` may have a single entry.
    """

    dates: tuple
    values: np.ndarray

    def __post_init__(self):
        dates = tuple(self.dates)
        vals = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", vals)
        if len(dates) != vals.size:
            raise ValidationError("dates and values differ in length")
        if not dates:
            raise ValidationError("empty series")
        for i in range(1, len(dates)):
            if not dates[i] > dates[i - 1]:
                raise ValidationError(f"dates not strictly increasing at position {i} ({dates[i]})")
        bad = np.flatnonzero(~(vals > 0) | ~np.isfinite(vals))
        if bad.size:
            raise ValidationError(f"non-positive or non-finite value at position {bad[0]}")

    def __len__(self):
        return len(self.dates)

    def index_of(self, date) -> int:
        try:
            return self.dates.index(date)
        except ValueError:
            raise ValidationError(f"date {date} not in series") from None

    def slice_dates(self, start, end) -> "PriceSeries":
        keep = [i for i, d in enumerate(self.dates) if start <= d <= end]
        if not keep:
            raise ValidationError(f"no dates in window [{start}, {end}]")
        return PriceSeries(tuple(self.dates[i] for i in keep), self.values[keep])

    def to_json(self) -> dict:
        return {"dates": [d.isoformat() for d in self.dates], "values": [float(v) for v in self.values]}


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n_used: int = 0
    n_dropped: int = 0

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r_squared,
                "n_used": self.n_used, "n_dropped": self.n_dropped}


def load_csv(path) -> PriceSeries:
    """Read a ``date,close`` CSV with ISO dates; errors name the offending row.

    Row numbers count the header as row 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip().lower() for c in rows[0]] != ["date", "close"]:
        raise ParseError(f"{path}: expected header 'date,close'")
    dates, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2 or not row[0].strip() or not row[1].strip():
            raise ParseError(f"{path}: row {lineno}: expected 'date,close', got {row!r}")
        try:
            d = _dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise ParseError(f"{path}: row {lineno}: bad date {row[0]!r}") from None
        try:
            v = float(row[1])
        except ValueError:
            raise ParseError(f"{path}: row {lineno}: bad value {row[1]!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise ValidationError(f"{path}: row {lineno}: non-positive price {v}")
        if dates and not d > dates[-1]:
            raise ValidationError(f"{path}: row {lineno}: date {d} not after {dates[-1]}")
        dates.append(d)
        vals.append(v)
    if len(dates) < 2:
        raise ValidationError(f"{path}: need at least 2 rows, got {len(dates)}")
    return PriceSeries(tuple(dates), np.array(vals))


def write_series_csv(series: PriceSeries, path, header=("date", "close")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for d, v in zip(series.dates, series.values):
            w.writerow([d.isoformat(), repr(float(v))])


def ewma_sbar(series: PriceSeries, h_days: float, t_index: int) -> float:
    """EWMA of the prices strictly before ``t_index`` (unit day spacing).

    ``(1/h) sum_{i < t} exp(-(t - i)/h) S_i``, written with non-positive
    exponents so it cannot overflow.
    """
    if not h_days > 0:
        raise ValidationError("h_days must be positive")
    if not 1 <= t_index < len(series):
        raise ValidationError(f"t_index {t_index} outside [1, {len(series) - 1}]")
    lags = np.arange(t_index, 0, -1, dtype=float)
    return float(np.dot(np.exp(-lags / h_days), series.values[:t_index]) / h_days)


def _ewma_all(values: np.ndarray, h_days: float) -> np.ndarray:
    # E_t = e^{-1/h} (E_{t-1} + S_{t-1}), scaled by 1/h at the end
    q = math.exp(-1.0 / h_days)
    out = np.empty(values.size - 1)
    acc = 0.0
    for t in range(1, values.size):
        acc = q * (acc + values[t - 1])
        out[t - 1] = acc
    return out / h_days


def reconstruct_y(series: PriceSeries, h_days: float) -> PriceSeries:
    """``Y_t = S_t / S̄_t`` for every date with at least one past price."""
    if not h_days > 0:
        raise ValidationError("h_days must be positive")
    if len(series) < 2:
        raise ValidationError("need at least two prices to reconstruct Y")
    sbar = _ewma_all(series.values, h_days)
    return PriceSeries(series.dates[1:], series.values[1:] / sbar)


def regress(x: PriceSeries, y: PriceSeries) -> RegressionFit:
    """Ordinary least squares of ``y`` on ``x`` after an inner join on dates."""
    pos = {d: i for i, d in enumerate(y.dates)}
    ix, iy = [], []
    for i, d in enumerate(x.dates):
        j = pos.get(d)
        if j is not None:
            ix.append(i)
            iy.append(j)
    n = len(ix)
    dropped = len(x) + len(y) - 2 * n
    if n < 2:
        raise DegenerateError(f"only {n} common dates")
    xs, ys = x.values[ix], y.values[iy]
    xm, ym = xs.mean(), ys.mean()
    sxx = float(np.sum((xs - xm) ** 2))
    if sxx <= 1e-14 * max(1.0, float(np.sum(xs * xs))):
        raise DegenerateError("regressor is constant")
    sxy = float(np.sum((xs - xm) * (ys - ym)))
    syy = float(np.sum((ys - ym) ** 2))
    slope = sxy / sxx
    intercept = float(ym - slope * xm)
    if syy == 0.0:
        r2 = 0.0
    else:
        r2 = min(1.0, max(0.0, sxy * sxy / (sxx * syy)))
    return RegressionFit(slope, intercept, r2, n, dropped)


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
