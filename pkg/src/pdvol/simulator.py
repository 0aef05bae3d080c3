"""Euler simulation of the EWMA ratio Y (and jointly of S).

One step maps ``x`` to ``x (1 + (dt/h)(1 - x) + sigma(x) dw)`` with
``dw ~ N(0, dt/252)``, ``dt`` in trading days.  A path whose next value is not
strictly above the threshold ``D`` is discarded at that step (or, in absorbing
mode, clamped to ``D`` and evolved on from there).
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AllPathsDiscarded, DomainError, ValidationError
from .model import TRADING_DAYS, ModelParams
from .rng import standard_normals


@dataclass(frozen=True)
class EulerConfig:
    """Time grid, threshold and noise settings of the Euler scheme.

    ``zero_noise`` replaces every Brownian increment by 0 (deterministic
    reduction used by tests).  ``absorb`` clamps failing paths at the threshold
    instead of discarding them.  ``stream`` selects an independent noise
    stream for the same seed.
    """

    dt_days: float = 1.0
    threshold_d: float = 0.0
    seed: int = 0
    steps: int = 252
    absorb: bool = False
    zero_noise: bool = False
    workers: int = 1
    stream: int = 0

    def __post_init__(self):
        if not (self.dt_days > 0 and math.isfinite(self.dt_days)):
            raise ValidationError("dt_days must be positive")
        if not self.threshold_d >= 0:
            raise ValidationError("threshold_d must be non-negative")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError("steps must be a positive integer")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.absorb and not self.threshold_d > 0:
            raise ValidationError("absorbing mode needs a positive threshold_d")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


@dataclass
class PathSet:
    """Simulated Y paths, shape ``(M, steps + 1)``.

    Rows of discarded paths hold NaN from the failing step on;
    ``discard_step[j]`` is that step (-1 for survivors).
    """

    paths: np.ndarray
    discarded: list
    seed: int
    discard_step: np.ndarray
    absorbed: list = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def surviving(self) -> np.ndarray:
        return np.flatnonzero(self.discard_step < 0)

    @property
    def discard_fraction(self) -> float:
        return len(self.discarded) / self.n_paths


def euler_step(params: ModelParams, x: float, dw: float, dt_days: float) -> float:
    """One Euler step of Y from ``x`` with Brownian increment ``dw`` (annual units)."""
    if not x > 0:
        raise DomainError("Euler step requires x > 0")
    return _step(params, np.float64(x), np.float64(dw), dt_days).item()


def _step(params, x, dw, dt_days):
    # sigma inlined: x > 0 is guaranteed by the caller's threshold logic
    sig = -params.alpha / params.beta + params.gamma * np.exp(-params.beta * np.log(x))
    return x * (1.0 + (dt_days / params.h_days) * (1.0 - x) + sig * dw)


def increments(cfg: EulerConfig, n_paths: int, steps: int | None = None, path_offset: int = 0) -> np.ndarray:
    """Brownian increments ``dw`` of shape ``(n_paths, steps)`` for ``cfg``."""
    steps = cfg.steps if steps is None else steps
    if cfg.zero_noise:
        return np.zeros((n_paths, steps))
    z = standard_normals(cfg.seed, np.arange(path_offset, path_offset + n_paths), steps,
                         stream=cfg.stream, workers=cfg.workers)
    return z * math.sqrt(cfg.dt_days / TRADING_DAYS)


def _evolve(params, y0, dw, cfg, s0=None, rate=0.0):
    m, steps = dw.shape
    y = np.empty((m, steps + 1))
    y[:, 0] = y0
    s = None
    if s0 is not None:
        s = np.empty((m, steps + 1))
        s[:, 0] = s0
    disc = np.full(m, -1, dtype=np.int64)
    clamped = np.zeros(m, dtype=bool)
    alive = np.ones(m, dtype=bool)
    d = cfg.threshold_d
    r_dt = rate * cfg.dt_days / TRADING_DAYS
    x = y[:, 0].copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        for k in range(steps):
            idx = np.flatnonzero(alive)
            xa = x[idx]
            sig = -params.alpha / params.beta + params.gamma * np.exp(-params.beta * np.log(xa))
            if r_dt:
                nxt = xa * (1.0 + (cfg.dt_days / params.h_days) * (1.0 - xa) + r_dt + sig * dw[idx, k])
            else:
                nxt = xa * (1.0 + (cfg.dt_days / params.h_days) * (1.0 - xa) + sig * dw[idx, k])
            if s is not None:
                s[:, k + 1] = s[:, k]
                s[idx, k + 1] = s[idx, k] * (1.0 + r_dt + sig * dw[idx, k])
            bad = ~(nxt > d)
            if cfg.absorb:
                nxt[bad] = d
                clamped[idx[bad]] = True
            else:
                dead = idx[bad]
                alive[dead] = False
                disc[dead] = k + 1
                nxt[bad] = np.nan
                if s is not None:
                    s[dead, k + 1] = np.nan
            x[idx] = nxt
            y[:, k + 1] = x
    if not cfg.absorb:
        for j in np.flatnonzero(~alive):
            y[j, disc[j]:] = np.nan
            if s is not None:
                s[j, disc[j]:] = np.nan
    return y, s, disc, np.flatnonzero(clamped)


def _chunks(n, workers):
    return [c for c in np.array_split(np.arange(n), max(1, min(workers, n))) if c.size]


def _run(params, y0, cfg, n_paths, dw, s0=None, rate=0.0):
    if dw is None:
        dw = increments(cfg, n_paths)
    dw = np.asarray(dw, dtype=float)
    if dw.shape != (n_paths, cfg.steps):
        raise ValidationError(f"increments must have shape {(n_paths, cfg.steps)}, got {dw.shape}")
    if cfg.workers <= 1 or n_paths < 2:
        return _evolve(params, y0, dw, cfg, s0, rate)
    parts = _chunks(n_paths, cfg.workers)
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        res = list(pool.map(lambda c: _evolve(params, y0, dw[c], cfg, s0, rate), parts))
    y = np.concatenate([r[0] for r in res])
    s = None if s0 is None else np.concatenate([r[1] for r in res])
    disc = np.concatenate([r[2] for r in res])
    clamped = np.concatenate([c[r[3]] for c, r in zip(parts, res)])
    return y, s, disc, clamped


def simulate_y(params: ModelParams, y0: float, cfg: EulerConfig, n_paths: int,
               dw: np.ndarray | None = None) -> PathSet:
    """Simulate ``n_paths`` Euler paths of Y started at ``y0``.

    Parameters
    ----------
    dw : array, optional
        Pre-drawn increments of shape ``(n_paths, cfg.steps)``; by default they
        are generated from ``cfg`` (common random numbers across calls).
    """
    if not y0 > cfg.threshold_d:
        raise ValidationError(f"y0={y0} must exceed the threshold {cfg.threshold_d}")
    if n_paths < 1:
        raise ValidationError("n_paths must be positive")
    y, _, disc, clamped = _run(params, y0, cfg, n_paths, dw)
    return PathSet(y, np.flatnonzero(disc >= 0).tolist(), cfg.seed, disc, clamped.tolist())


def simulate_joint(params: ModelParams, s0: float, y0: float, cfg: EulerConfig, n_paths: int,
                   dw: np.ndarray | None = None, rate: float = 0.0):
    """Simulate S and Y driven by one Brownian motion.

    S steps as ``S (1 + sigma(Y) dw)`` (plus ``r dt`` when ``rate`` is non-zero,
    which also adds ``r Y dt`` to Y).  Returns ``(s_paths, PathSet)``; S rows
    of discarded paths are NaN from the discard step on.
    """
    if not s0 > 0:
        raise ValidationError("s0 must be positive")
    if not y0 > cfg.threshold_d:
        raise ValidationError(f"y0={y0} must exceed the threshold {cfg.threshold_d}")
    y, s, disc, clamped = _run(params, y0, cfg, n_paths, dw, s0=s0, rate=rate)
    return s, PathSet(y, np.flatnonzero(disc >= 0).tolist(), cfg.seed, disc, clamped.tolist())


def ergodic_average(params: ModelParams, y0: float, g, horizon_steps: int, cfg: EulerConfig) -> float:
    """Time average ``(1/T) sum_{t<T} g(Y_t)`` along one trajectory."""
    if horizon_steps < 10_000:
        raise ValidationError("ergodic averages need at least 1e4 steps")
    run_cfg = EulerConfig(cfg.dt_days, cfg.threshold_d, cfg.seed, horizon_steps,
                          cfg.absorb, cfg.zero_noise, 1, cfg.stream)
    ps = simulate_y(params, y0, run_cfg, 1)
    if ps.discarded:
        raise AllPathsDiscarded(f"trajectory discarded at step {ps.discard_step[0]}")
    path = ps.paths[0, :horizon_steps]
    vals = np.broadcast_to(np.asarray(g(path), dtype=float), path.shape)
    return float(np.mean(vals))


def write_paths_csv(paths: PathSet, path) -> None:
    """Write surviving paths: header ``step,p<i>,...``, one row per step."""
    keep = paths.surviving
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"p{j}" for j in keep])
        for k in range(paths.paths.shape[1]):
            w.writerow([k] + [repr(float(v)) for v in paths.paths[keep, k]])
