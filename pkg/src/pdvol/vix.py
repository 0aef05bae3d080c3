"""Nested Monte Carlo estimate of the continuously monitored VIX.

For each date t the inner simulation runs M Euler paths of Y from ``Y_t`` on a
grid of N points spaced ``delta/N`` days, and estimates

    VIX_t^2 ~ (1/(N M_surv)) sum_j sum_{i<N} sigma(Y^j_{u_i})^2

(left-endpoint rule, discarded paths excluded).  Both averages are formed
as running means in fixed order, which reproduces a constant integrand
exactly.  VIX is quoted in points,
``100 * sqrt(VIX^2)``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AllPathsDiscarded, ValidationError
from .market import PriceSeries, reconstruct_y
from .model import ModelParams
from .simulator import EulerConfig, increments


@dataclass(frozen=True)
class VixConfig:
    """Inner grid size N, path count M, horizon delta (days) and Euler settings.

    Only ``seed``, ``threshold_d``, ``absorb``, ``zero_noise``, ``workers`` and
    ``stream`` of ``euler`` are used; the inner step is ``delta_days / N``.
    """

    n_inner_steps: int = 100
    m_paths: int = 100
    delta_days: float = 30.0
    euler: EulerConfig = field(default_factory=EulerConfig)

    def __post_init__(self):
        if int(self.n_inner_steps) != self.n_inner_steps or self.n_inner_steps < 1:
            raise ValidationError("n_inner_steps must be a positive integer")
        if int(self.m_paths) != self.m_paths or self.m_paths < 1:
            raise ValidationError("m_paths must be a positive integer")
        if not self.delta_days > 0:
            raise ValidationError("delta_days must be positive")

    @property
    def inner_dt(self) -> float:
        return self.delta_days / self.n_inner_steps

    def inner_euler(self, stream: int | None = None) -> EulerConfig:
        return replace(self.euler, dt_days=self.inner_dt, steps=self.n_inner_steps,
                       stream=self.euler.stream if stream is None else stream)


@dataclass
class VixTrack:
    dates: tuple
    vix_hat: np.ndarray
    discard_fraction: np.ndarray
    flagged: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "vix_hat", "discard_fraction"])
            for d, v, q in zip(self.dates, self.vix_hat, self.discard_fraction):
                w.writerow([d.isoformat(), repr(float(v)), repr(float(q))])


def inner_increments(cfg: VixConfig, stream: int | None = None) -> np.ndarray:
    """Increments ``(M, N)`` used by :func:`vix_squared_at` for ``stream``."""
    return increments(cfg.inner_euler(stream), cfg.m_paths)


def vix_squared_at(params: ModelParams, y_t: float, cfg: VixConfig, stream: int | None = None,
                   dw: np.ndarray | None = None):
    """Annualised VIX^2 estimate at state ``y_t``.

    Returns ``(vix_sq, discard_fraction)``.  ``dw`` (shape ``(M, N)``) may be
    supplied to reuse increments across calls; otherwise they are drawn from
    ``(cfg.euler.seed, stream)``.  Only the first N-1 columns are consumed.
    """
    d = cfg.euler.threshold_d
    if not y_t > d:
        raise ValidationError(f"y_t={y_t} must exceed the threshold {d}")
    n, m = cfg.n_inner_steps, cfg.m_paths
    if dw is None:
        dw = inner_increments(cfg, stream)
    dw = np.asarray(dw, dtype=float)
    if dw.shape[0] != m or dw.shape[1] < n - 1:
        raise ValidationError(f"increments must have shape ({m}, >= {n - 1})")
    a, b, g, h = params.alpha, params.beta, params.gamma, params.h_days
    dt = cfg.inner_dt
    x = np.full(m, float(y_t))
    acc = np.zeros(m)
    alive = np.ones(m, dtype=bool)
    with np.errstate(invalid="ignore", divide="ignore"):
        for i in range(n):
            sig = -a / b + g * np.exp(-b * np.log(x))
            # running mean: exact when sigma is constant
            acc += (sig * sig - acc) / (i + 1)
            if i == n - 1:
                break
            nxt = x * (1.0 + (dt / h) * (1.0 - x) + sig * dw[:, i])
            bad = ~(nxt > d)
            if cfg.euler.absorb:
                nxt[bad] = d
            else:
                alive &= ~bad
                nxt[~alive] = np.nan
            x = nxt
    surv = np.flatnonzero(alive)
    if surv.size == 0:
        raise AllPathsDiscarded(f"all {m} inner paths discarded from y={y_t}")
    mean = 0.0
    for k, j in enumerate(surv):  # fixed-order running mean over paths
        mean += (acc[j] - mean) / (k + 1)
    return float(mean), 1.0 - surv.size / m


def date_stream(date, base: int = 0) -> int:
    """Noise stream for a calendar date: common across parameter values."""
    return (int(base) << 32) + date.toordinal()


def vix_points(vix_sq: float) -> float:
    return 100.0 * math.sqrt(vix_sq)


def vix_track(params: ModelParams, spx: PriceSeries, window, cfg: VixConfig,
              y_series: PriceSeries | None = None) -> VixTrack:
    """Simulated VIX (points) on every date of ``window = (start, end)``.

    Y is rebuilt from ``spx`` with the EWMA of window ``params.h_days``; each
    date uses its own noise stream so that tracks are common-random-number
    coupled across parameter values.  Dates where every inner path is
    discarded get ``NaN`` and are listed in ``flagged``.
    """
    ys = reconstruct_y(spx, params.h_days) if y_series is None else y_series
    start, end = window
    if start > end:
        raise ValidationError("window start after end")
    if start < ys.dates[0] or end > ys.dates[-1]:
        raise ValidationError(f"window [{start}, {end}] outside the feasible range "
                              f"[{ys.dates[0]}, {ys.dates[-1]}]")
    sub = ys.slice_dates(start, end)

    def one(k):
        try:
            return vix_squared_at(params, sub.values[k], cfg, stream=date_stream(sub.dates[k], cfg.euler.stream))
        except AllPathsDiscarded:
            return math.nan, 1.0

    idx = range(len(sub))
    if cfg.euler.workers > 1 and len(sub) > 1:
        with ThreadPoolExecutor(max_workers=cfg.euler.workers) as pool:
            res = list(pool.map(one, idx))
    else:
        res = [one(k) for k in idx]
    vsq = np.array([r[0] for r in res])
    frac = np.array([r[1] for r in res])
    flagged = [sub.dates[k] for k in np.flatnonzero(np.isnan(vsq))]
    return VixTrack(sub.dates, 100.0 * np.sqrt(vsq), frac, flagged)
