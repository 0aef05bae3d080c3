"""Small-time large deviations: controlled flows, endpoint rates, smile asymptote.

A control is a piecewise-constant derivative ``fdot`` on n uniform cells of
[0, 1], with ``f(0) = 0``.  The controlled flow of Y has the closed form

    g(t)^β = y_sigma^β + (y0^β - y_sigma^β) exp(-α f(t)),

which solves ``dg = σ̃(g) df``; the log-stock follows ``dx = σ(g) df``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import AdmissibilityError, DomainError, NoFeasibleControl, ValidationError
from .model import ModelParams, sigma_derivatives

FINITE, INFINITE = "finite", "infinite"


@dataclass
class ControlPath:
    fdot: np.ndarray

    def __post_init__(self):
        self.fdot = np.asarray(self.fdot, dtype=float).ravel()
        if self.fdot.size < 1 or not np.all(np.isfinite(self.fdot)):
            raise ValidationError("fdot must be a non-empty finite vector")

    @property
    def grid_size(self) -> int:
        return self.fdot.size

    def f_nodes(self) -> np.ndarray:
        """``f`` at the n + 1 grid nodes."""
        return np.concatenate([[0.0], np.cumsum(self.fdot) / self.grid_size])


@dataclass
class RateResult:
    endpoint: float
    rate: float
    argmin_control: ControlPath | None
    converged: bool
    verdict: str = FINITE
    residual: float = 0.0
    details: dict = field(default_factory=dict)


def action(f: ControlPath) -> float:
    """``(1/2) int_0^1 fdot^2``, exact for piecewise-constant fdot."""
    return 0.5 * float(np.dot(f.fdot, f.fdot)) / f.grid_size


def admissibility_floor(params: ModelParams, y0: float) -> float:
    """Lower bound on ``f`` keeping the flow positive (``-inf`` if y0 >= y_sigma)."""
    if not y0 > 0:
        raise DomainError("y0 must be positive")
    if params.degenerate or y0 >= params.y_sigma:
        return -math.inf
    return math.log1p(-(y0 / params.y_sigma) ** params.beta) / params.alpha


def _bracket(params, y0, f):
    ysb = params.y_sigma ** params.beta
    return ysb + (y0 ** params.beta - ysb) * np.exp(-params.alpha * f)


def flow_from_f(params: ModelParams, f, y0: float) -> np.ndarray:
    """Closed-form flow at given values of ``f``."""
    br = _bracket(params, y0, np.asarray(f, dtype=float))
    if np.any(~(br > 0)):
        raise AdmissibilityError("control drives the flow through zero")
    return np.exp(np.log(br) / params.beta)


def flow_y(params: ModelParams, f: ControlPath, y0: float) -> np.ndarray:
    """The controlled Y flow at the n + 1 grid nodes."""
    if not y0 > 0:
        raise DomainError("y0 must be positive")
    return flow_from_f(params, f.f_nodes(), y0)


def flow_x(params: ModelParams, f: ControlPath, x0: float, y0: float) -> np.ndarray:
    """Log-stock flow at the nodes, left-endpoint rule on ``dx = σ(g) df``."""
    g = flow_y(params, f, y0)
    sig = sigma_derivatives(params, g[:-1])[0]
    return x0 + np.concatenate([[0.0], np.cumsum(np.asarray(sig) * f.fdot) / f.grid_size])


def f_for_endpoint_y(params: ModelParams, y0: float, y1: float) -> float:
    """The unique terminal ``f(1)`` carrying the flow from y0 to y1."""
    if params.degenerate:
        return params.beta / params.alpha * math.log(y0 / y1)
    ysb = params.y_sigma ** params.beta
    return -math.log((y1 ** params.beta - ysb) / (y0 ** params.beta - ysb)) / params.alpha


def reachable_y(params: ModelParams, y0: float, y1: float) -> bool:
    if params.degenerate:
        return y1 > 0
    ys = params.y_sigma
    if y0 == ys:
        return y1 == ys
    return (y1 - ys) * (y0 - ys) > 0 and y1 > 0


def endpoint_rate_y(params: ModelParams, y0: float, y1: float, n: int = 100) -> RateResult:
    """Rate of reaching ``y1`` at time 1 from ``y0``.

    The endpoint pins ``f(1)``; the cheapest control with that endpoint is the
    straight line, which stays above the admissibility floor because the
    floor is only approached as the flow tends to 0.  A target across
    y_sigma is reported with verdict ``"infinite"``.
    """
    if not (y0 > 0 and y1 > 0):
        raise DomainError("y0 and y1 must be positive")
    if y1 == y0:
        return RateResult(y1, 0.0, ControlPath(np.zeros(n)), True)
    if not reachable_y(params, y0, y1):
        return RateResult(y1, math.inf, None, True, verdict=INFINITE)
    f1 = f_for_endpoint_y(params, y0, y1)
    ctrl = ControlPath(np.full(n, f1))
    return RateResult(y1, 0.5 * f1 * f1, ctrl, True)


def _x_range(params, y0):
    # terminal log-moves attainable by the continuous flow
    if params.degenerate:
        return -math.inf, math.inf
    ys = params.y_sigma
    if y0 < ys:
        return -math.inf, math.log(ys / y0)
    if y0 > ys:
        return math.log(ys / y0), math.inf
    return 0.0, 0.0


class _XProblem:
    """Augmented-Lagrangian pieces for ``min action s.t. x(1) - x0 = k``."""

    def __init__(self, params, y0, k, n, barrier=1e-9):
        self.p, self.y0, self.k, self.n = params, y0, k, n
        self.floor = admissibility_floor(params, y0)
        self.tau = barrier
        ysb = params.y_sigma ** params.beta
        self.min_bracket = 1e-12 * max(ysb, y0 ** params.beta)
        # extended-log barrier switches to a quadratic below this distance
        self.delta = 1e-6 * max(1.0, abs(self.floor)) if math.isfinite(self.floor) else 0.0

    def state(self, u):
        n = self.n
        f = np.concatenate([[0.0], np.cumsum(u) / n])
        br = np.maximum(_bracket(self.p, self.y0, f), self.min_bracket)
        g = np.exp(np.log(br) / self.p.beta)
        s0, s1, _ = sigma_derivatives(self.p, g)
        s0, s1 = np.atleast_1d(s0), np.atleast_1d(s1)
        return f, g, s0, s1

    def constraint(self, u):
        f, g, s0, s1 = self.state(u)
        n = self.n
        c = float(np.dot(s0[:-1], u)) / n - self.k
        # d sigma(g_i)/d f = sigma'(g_i) sigma_tilde(g_i)
        w = s1[:-1] * g[:-1] * s0[:-1] * u / n
        tail = np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])
        grad = s0[:-1] / n + tail / n
        return c, grad, f

    def barrier(self, f):
        if not math.isfinite(self.floor):
            return 0.0, np.zeros(self.n)
        d = f[1:] - self.floor
        dl = self.delta
        inside = d > dl
        val = np.where(inside, -np.log(np.where(inside, d, 1.0)),
                       -math.log(dl) - (d - dl) / dl + 0.5 * ((d - dl) / dl) ** 2)
        dval = np.where(inside, -1.0 / np.where(inside, d, 1.0), -1.0 / dl + (d - dl) / dl ** 2)
        # f_i depends on u_m for m < i
        grad = np.cumsum(dval[::-1])[::-1] / self.n
        return self.tau * float(np.sum(val)) / self.n, self.tau * grad

    def lagrangian(self, u, lam, mu):
        c, gc, f = self.constraint(u)
        bv, bg = self.barrier(f)
        val = 0.5 * float(np.dot(u, u)) / self.n + lam * c + 0.5 * mu * c * c + bv
        grad = u / self.n + (lam + mu * c) * gc + bg
        return val, grad


def _solve_x(prob: _XProblem, u0, tol=1e-9, max_outer=40):
    u = np.array(u0, dtype=float)
    lam, mu = 0.0, 10.0
    c_prev = math.inf
    for _ in range(max_outer):
        res = optimize.minimize(prob.lagrangian, u, args=(lam, mu), jac=True, method="L-BFGS-B",
                                options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12})
        u = res.x
        c = prob.constraint(u)[0]
        if not math.isfinite(c):
            break
        lam += mu * c
        if abs(c) < tol:
            break
        if abs(c) > 0.25 * c_prev:
            mu = min(mu * 10.0, 1e12)
        c_prev = abs(c)
    c, _, f = prob.constraint(u)
    return u, abs(c), f


def endpoint_rate_x(params: ModelParams, x0: float, y0: float, k: float, n: int = 100,
                    restarts: int = 5, seed: int = 0) -> RateResult:
    """Minimal action of a control moving the log-stock by ``k`` over [0, 1].

    Augmented-Lagrangian minimisation (L-BFGS-B, analytic gradients) over
    ``fdot``, with a barrier on the admissibility floor when y0 < y_sigma.
    Restart 0 starts from the straight line matching the continuous
    endpoint; the others perturb it with seeded noise.  The best restart with
    terminal residual below 1e-6 is returned.
    """
    if n < 50:
        raise ValidationError("grid size n must be at least 50")
    if restarts < 1:
        raise ValidationError("restarts must be positive")
    if not y0 > 0:
        raise DomainError("y0 must be positive")
    if k == 0:
        return RateResult(0.0, 0.0, ControlPath(np.zeros(n)), True)
    if not params.degenerate and y0 == params.y_sigma:
        raise NoFeasibleControl("log-stock is frozen at y_sigma")
    lo, hi = _x_range(params, y0)
    if not lo < k < hi:
        raise NoFeasibleControl(f"log-move {k} outside the attainable range ({lo}, {hi})")
    f1 = f_for_endpoint_y(params, y0, y0 * math.exp(k))
    prob = _XProblem(params, y0, k, n)
    rng = np.random.default_rng(seed)
    best = None
    residuals = []
    for r in range(restarts):
        u0 = np.full(n, f1)
        if r:
            u0 = u0 + 0.3 * max(abs(f1), 0.1) * rng.standard_normal(n)
            if math.isfinite(prob.floor):
                # keep the starting path above the floor
                fn = np.cumsum(u0) / n
                if fn.min() <= prob.floor * 0.9:
                    u0 = np.full(n, f1)
        u, res, f = _solve_x(prob, u0)
        residuals.append(res)
        if res < 1e-6 and (not math.isfinite(prob.floor) or f.min() >= prob.floor):
            val = 0.5 * float(np.dot(u, u)) / n
            if best is None or val < best[0]:
                best = (val, u, res)
    if best is None:
        raise NoFeasibleControl(f"no restart met the terminal constraint (residuals {min(residuals):.2e})")
    val, u, res = best
    return RateResult(k, val, ControlPath(u), True, residual=res,
                      details={"restart_residuals": residuals})


def smile_asymptote(params: ModelParams, x0: float, y0: float, strikes, n: int = 100,
                    restarts: int = 2, seed: int = 0):
    """Small-time implied volatility limit at each log-strike.

    ``Sigma(k) = |k| / sqrt(2 inf_{z beyond k} I_X(z))`` where the infimum runs
    over ``z >= k`` for ``k > 0`` and ``z <= k`` for ``k < 0``; it is located by
    a bounded scalar search seeded at ``z = k``.  Returns ``(sigmas, flags)``
    with ``NaN`` and flag ``"undefined"`` where no control is feasible.
    """
    strikes = [float(k) for k in strikes]
    if any(k == 0 for k in strikes):
        raise ValidationError("strikes must be non-zero")
    lo, hi = _x_range(params, y0)
    sig, flags = [], []
    for k in strikes:
        try:
            rate_k = endpoint_rate_x(params, x0, y0, k, n, restarts, seed).rate
        except NoFeasibleControl:
            sig.append(math.nan)
            flags.append("undefined")
            continue

        def rate(z):
            try:
                return endpoint_rate_x(params, x0, y0, z, n, restarts, seed).rate
            except NoFeasibleControl:
                return math.inf

        far = 2.0 * k
        far = min(far, hi - 1e-9 * abs(hi)) if k > 0 and math.isfinite(hi) else far
        far = max(far, lo + 1e-9 * abs(lo)) if k < 0 and math.isfinite(lo) else far
        best = rate_k
        if far != k:
            a, b = (k, far) if k < far else (far, k)
            res = optimize.minimize_scalar(rate, bounds=(a, b), method="bounded",
                                           options={"xatol": 1e-4 * abs(k), "maxiter": 25})
            if res.fun < best:
                best = float(res.fun)
        sig.append(abs(k) / math.sqrt(2.0 * best) if best > 0 else math.inf)
        flags.append("ok")
    return np.array(sig), flags


def write_smile_csv(strikes, sigmas, flags, path) -> None:
    """CSV ``k,sigma_asymptote,rate,flag``; ``rate = k^2 / (2 sigma^2)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "sigma_asymptote", "rate", "flag"])
        for k, s, fl in zip(strikes, sigmas, flags):
            r = k * k / (2.0 * s * s) if s > 0 else math.inf if s == 0 else math.nan
            w.writerow([repr(float(k)), repr(float(s)), repr(float(r)), fl])
