"""Least-squares calibration of (alpha, beta, gamma) to a market VIX series.

The objective is evaluated under common random numbers: the inner increments
of every calibration date are drawn once per problem and reused by every
evaluation, so ``params -> LSE`` is a deterministic function.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AllPathsDiscarded, ValidationError
from .market import PriceSeries, reconstruct_y
from .model import ModelParams
from .vix import VixConfig, date_stream, inner_increments, vix_squared_at

DEFAULT_BOUNDS = ((0.01, 20.0), (0.1, 12.0), (0.01, 20.0))


@dataclass
class CalibrationProblem:
    """Market data, model window h, starting point, box and simulation settings.

    ``stride`` keeps every stride-th common date; ``policy`` decides what an
    all-discarded date does to the objective: ``"fail"`` raises,
    ``"skip"`` drops the date from the sum.
    """

    market_vix: PriceSeries
    spx: PriceSeries
    h_days: float
    initial_guess: tuple
    vix_cfg: VixConfig = field(default_factory=VixConfig)
    bounds: tuple = DEFAULT_BOUNDS
    budget: int = 200
    stride: int = 1
    policy: str = "fail"
    workers: int = 1

    def __post_init__(self):
        self.initial_guess = tuple(float(v) for v in self.initial_guess)
        self.bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(self.initial_guess) != 3 or len(self.bounds) != 3:
            raise ValidationError("need three parameters and three bounds")
        for (lo, hi), v, name in zip(self.bounds, self.initial_guess, ("alpha", "beta", "gamma")):
            if not lo > 0:
                raise ValidationError(f"lower bound of {name} must be positive")
            if not lo < hi:
                raise ValidationError(f"infeasible bounds for {name}: [{lo}, {hi}]")
            if not lo <= v <= hi:
                raise ValidationError(f"initial {name}={v} outside [{lo}, {hi}]")
        if self.budget < 1:
            raise ValidationError("budget must be at least 1")
        if self.stride < 1:
            raise ValidationError("stride must be at least 1")
        if self.policy not in ("fail", "skip"):
            raise ValidationError("policy must be 'fail' or 'skip'")
        ys = reconstruct_y(self.spx, self.h_days)
        ypos = {d: i for i, d in enumerate(ys.dates)}
        common = [(d, i) for i, d in enumerate(self.market_vix.dates) if d in ypos]
        common = common[::self.stride]
        if not common:
            raise ValidationError("market VIX and reconstructed Y share no dates")
        self.dates = tuple(d for d, _ in common)
        self.market = np.array([self.market_vix.values[i] for _, i in common])
        self.y_values = np.array([ys.values[ypos[d]] for d in self.dates])
        base = self.vix_cfg.euler.stream
        self._dw = [inner_increments(self.vix_cfg, date_stream(d, base)) for d in self.dates]

    def model_vix(self, params) -> np.ndarray:
        """Simulated VIX (points) on the calibration dates; NaN where all paths die."""
        p = ModelParams(*params, self.h_days)
        out = np.empty(len(self.dates))
        for k, (y, dw) in enumerate(zip(self.y_values, self._dw)):
            try:
                out[k] = 100.0 * math.sqrt(vix_squared_at(p, y, self.vix_cfg, dw=dw)[0])
            except AllPathsDiscarded:
                out[k] = math.nan
        return out


@dataclass
class CalibrationResult:
    optimum: tuple
    lse: float
    evaluations: int
    trace: list
    budget_exhausted: bool = False
    converged: bool = False

    def to_json(self) -> dict:
        a, b, g = self.optimum
        return {
            "optimum": {"alpha": a, "beta": b, "gamma": g},
            "lse": self.lse,
            "evaluations": self.evaluations,
            "budget_exhausted": self.budget_exhausted,
            "converged": self.converged,
            "trace": [{"alpha": p[0], "beta": p[1], "gamma": p[2], "lse": v} for p, v in self.trace],
        }


def lse_objective(problem: CalibrationProblem, params) -> float:
    """Sum of squared VIX-point differences over the calibration dates."""
    params = tuple(float(v) for v in params)
    for (lo, hi), v in zip(problem.bounds, params):
        if not lo <= v <= hi:
            raise ValidationError(f"parameter {v} outside [{lo}, {hi}]")
    vix = problem.model_vix(params)
    bad = np.isnan(vix)
    if bad.any():
        if problem.policy == "fail":
            raise AllPathsDiscarded(f"all paths discarded on {int(bad.sum())} date(s), "
                                    f"first {problem.dates[int(np.argmax(bad))]}")
    r = problem.market[~bad] - vix[~bad]
    return float(np.dot(r, r))


def _clip(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def nelder_mead_box(fun, x0, lower, upper, budget, xrtol=1e-3, init_step=0.05, workers=1):
    """Derivative-free simplex descent restricted to a box.

    Every trial point is clipped to the box.  Stops when the simplex diameter
    relative to the best vertex falls below ``xrtol`` or after ``budget``
    function evaluations.  Returns ``(best_x, best_f, trace, exhausted, converged)``
    where ``trace`` lists every evaluation in order.
    """
    lo, hi = np.asarray(lower, float), np.asarray(upper, float)
    x0 = _clip(np.asarray(x0, float), lo, hi)
    dim = x0.size
    trace = []

    def evaluate(points):
        points = [p for p in points][: max(0, budget - len(trace))]
        if workers > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                vals = list(pool.map(lambda p: fun(tuple(p)), points))
        else:
            vals = [fun(tuple(p)) for p in points]
        for p, v in zip(points, vals):
            trace.append((tuple(float(c) for c in p), float(v)))
        return vals

    def best():
        k = int(np.argmin([v for _, v in trace]))
        return np.array(trace[k][0]), trace[k][1]

    f0 = evaluate([x0])[0]
    verts = [x0]
    for i in range(dim):
        v = x0.copy()
        step = init_step * (abs(v[i]) if v[i] != 0 else 1.0)
        v[i] = v[i] + step if v[i] + step <= hi[i] else v[i] - step
        verts.append(_clip(v, lo, hi))
    fv = [f0] + evaluate(verts[1:])
    if len(fv) < dim + 1:
        bx, bf = best()
        return bx, bf, trace, True, False
    simplex = np.array(verts)
    fv = np.array(fv, dtype=float)

    converged = False
    while True:
        order = np.argsort(fv, kind="stable")
        simplex, fv = simplex[order], fv[order]
        scale = np.maximum(np.abs(simplex[0]), 1e-12)
        if np.max(np.abs(simplex[1:] - simplex[0]) / scale) < xrtol:
            converged = True
            break
        if len(trace) >= budget:
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = _clip(centroid + (centroid - simplex[-1]), lo, hi)
        fr = evaluate([xr])
        if not fr:
            break
        fr = fr[0]
        if fr < fv[0]:
            xe = _clip(centroid + 2.0 * (centroid - simplex[-1]), lo, hi)
            fe = evaluate([xe])
            if fe and fe[0] < fr:
                simplex[-1], fv[-1] = xe, fe[0]
            else:
                simplex[-1], fv[-1] = xr, fr
            continue
        if fr < fv[-2]:
            simplex[-1], fv[-1] = xr, fr
            continue
        if fr < fv[-1]:
            xc = _clip(centroid + 0.5 * (xr - centroid), lo, hi)
        else:
            xc = _clip(centroid + 0.5 * (simplex[-1] - centroid), lo, hi)
        fc = evaluate([xc])
        if not fc:
            break
        if fc[0] < min(fr, fv[-1]):
            simplex[-1], fv[-1] = xc, fc[0]
            continue
        shrunk = [simplex[0] + 0.5 * (v - simplex[0]) for v in simplex[1:]]
        fs = evaluate(shrunk)
        for k, val in enumerate(fs, start=1):
            simplex[k], fv[k] = shrunk[k - 1], val
        if len(fs) < len(shrunk):
            break
    bx, bf = best()
    return bx, bf, trace, (not converged) and len(trace) >= budget, converged


def calibrate(problem: CalibrationProblem) -> CalibrationResult:
    """Minimise :func:`lse_objective` from ``problem.initial_guess``.

    The best point seen is returned; ``budget_exhausted`` is set when the
    evaluation budget ran out before the simplex collapsed.
    """
    lower = [b[0] for b in problem.bounds]
    upper = [b[1] for b in problem.bounds]
    fun = lambda p: lse_objective(problem, p)  # noqa: E731
    x, f, trace, exhausted, conv = nelder_mead_box(fun, problem.initial_guess, lower, upper,
                                                  problem.budget, workers=problem.workers)
    # restart from the best vertex: a collapsed simplex is often not a minimum
    while conv and len(trace) < problem.budget:
        x2, f2, t2, exhausted, conv = nelder_mead_box(fun, x, lower, upper, problem.budget - len(trace),
                                                      workers=problem.workers)
        trace += t2
        if not f2 < f * (1.0 - 1e-9):
            break
        x, f = x2, f2
    return CalibrationResult(tuple(float(v) for v in x), float(f), len(trace), trace, exhausted, conv)


def best_so_far(trace) -> np.ndarray:
    return np.minimum.accumulate([v for _, v in trace])
