"""Numerical boundary diagnostics for Y at the origin and at y_sigma.

Near y_sigma the process is studied through the shifted coordinate ``x > 0``:

* right side, ``Z = Y - y_sigma``: ``b̄(x) = b(y_sigma + x)``, ``σ̄(x) = σ̃(y_sigma + x)``;
* left side, ``Z = y_sigma - Y``: ``b̄(x) = -b(y_sigma - x)``, ``σ̄(x) = -σ̃(y_sigma - x)``.

On ``(0, a]`` we use

    rho(x) = exp(int_x^a 2 b̄/σ̄²),   s(x) = int_0^x rho  or  -int_x^a rho,
    phi(x) = (1 + |b̄(x)|) / σ̄²(x).

Integrability near 0 is decided by a three-valued dyadic trend test
(:func:`probe_integrability`), never by a single number.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .errors import DivergenceError, DomainError, EvidenceContradiction, QuadratureError, ValidationError
from .model import ModelParams, drift_b, sigma_tilde
from .simulator import EulerConfig, simulate_y

RIGHT = "right_of_y_sigma"
LEFT = "left_of_y_sigma"
SIDES = (RIGHT, LEFT)

CONVERGES, DIVERGES, INCONCLUSIVE = "converges", "diverges", "inconclusive"
TO_ZERO, TO_INFINITY = "zero", "infinity"

# ratio thresholds of the dyadic trend rule
DIVERGE_RATIO = 1.0 - 1e-6
CONVERGE_RATIO = 0.95


@dataclass
class ProbeRecord:
    """Dyadic evidence for integrability of a positive integrand at 0.

    ``partial_integrals[k]`` is the integral over ``[epsilons[k], a]``; it may
    be ``inf`` once the integrand overflows.  ``log_increments`` holds the log
    of each dyadic piece ``[eps_{k+1}, eps_k]``.
    """

    integrand_id: str
    epsilons: list
    partial_integrals: list
    verdict: str
    log_increments: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["partial_integrals"] = [float(v) if math.isfinite(v) else str(v) for v in self.partial_integrals]
        d["log_increments"] = [float(v) if math.isfinite(v) else str(v) for v in self.log_increments]
        return d


@dataclass
class TrendRecord:
    """Values of ``log rho`` along ``x = a 2^-k`` and the inferred limit."""

    label: str
    xs: list
    log_values: list
    verdict: str

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class BoundaryReport:
    origin_regular: bool
    origin_type: str
    y_sigma_left: str
    y_sigma_right: str
    infinity: str = "recurrent"
    y_sigma: float = float("nan")
    evidence: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "origin_regular": self.origin_regular,
            "origin_type": self.origin_type,
            "y_sigma": self.y_sigma,
            "y_sigma_left": self.y_sigma_left,
            "y_sigma_right": self.y_sigma_right,
            "infinity": self.infinity,
            "evidence": [e.to_json() for e in self.evidence],
        }


# ---------------------------------------------------------------- trend rule

def trend_verdict(log_increments) -> str:
    """Three-valued verdict from the logs of the last dyadic pieces.

    With ``r = d_{k+1}/d_k`` over the last three pieces: all ``r >= 1 - 1e-6``
    means divergence, all ``r <= 0.95`` convergence, anything else is
    inconclusive.  An infinite piece counts as divergence.
    """
    logs = np.asarray(log_increments, dtype=float)[-3:]
    if logs.size < 3:
        raise ValidationError("need at least three dyadic increments")
    if np.any(np.isnan(logs)):
        return INCONCLUSIVE
    if np.isposinf(logs[-1]):
        return DIVERGES
    if np.all(np.isneginf(logs[1:])):
        return CONVERGES
    with np.errstate(invalid="ignore", over="ignore"):
        ratios = np.exp(np.diff(logs))
    ratios = np.where(np.isnan(ratios), 0.0, ratios)
    if np.all(ratios >= DIVERGE_RATIO):
        return DIVERGES
    if np.all(ratios <= CONVERGE_RATIO):
        return CONVERGES
    return INCONCLUSIVE


def _quad(f, lo, hi, epsrel=1e-10):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, err, info = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200, full_output=1)[:3]
    return val, err, info


def probe_integrability(integrand, a: float, depth: int = 40, label: str = "integrand") -> ProbeRecord:
    """Trend test for ``int_0^a integrand`` using ``I_k = int_{a 2^-k}^a``, k = 1..depth."""
    if depth < 4:
        raise ValidationError("depth must be >= 4")
    if not a > 0:
        raise ValidationError("a must be positive")
    eps = [a * 2.0 ** -k for k in range(1, depth + 1)]
    with np.errstate(over="ignore", invalid="ignore"):
        first = _quad(integrand, eps[0], a)[0]
        pieces = [_quad(integrand, eps[k + 1], eps[k])[0] for k in range(depth - 1)]
    pieces = [p if not math.isnan(p) else math.inf for p in pieces]
    partial = list(np.cumsum([first] + pieces))
    with np.errstate(divide="ignore"):
        logs = [math.log(p) if p > 0 else -math.inf for p in pieces]
    return ProbeRecord(label, eps, [float(v) for v in partial], trend_verdict(logs), logs)


def probe_from_logs(label: str, eps, log_first: float, log_pieces) -> ProbeRecord:
    """Build a :class:`ProbeRecord` from dyadic pieces known only in log form."""
    logs = np.concatenate([[log_first], np.asarray(log_pieces, dtype=float)])
    with np.errstate(over="ignore"):
        partial = np.exp(np.logaddexp.accumulate(logs))
    return ProbeRecord(label, list(map(float, eps)), [float(v) for v in partial],
                       trend_verdict(log_pieces), [float(v) for v in log_pieces])


# ------------------------------------------------------- shifted coefficients

def _check_side(params, side):
    if params.degenerate:
        raise DomainError("gamma == 0 has no singular point y_sigma")
    if side not in SIDES:
        raise ValidationError(f"side must be one of {SIDES}")


def shifted_coefficients(params: ModelParams, x, side: str):
    """``(b̄(x), σ̄(x))`` for ``x > 0`` on the given side of y_sigma.

    ``σ̄`` is evaluated as ``y (α/β) expm1(-β log1p(u))`` with ``u = ±x/y_sigma``
    so that it keeps full relative accuracy for tiny ``x``.
    """
    _check_side(params, side)
    x = np.asarray(x, dtype=float)
    ys = params.y_sigma
    u = x / ys if side == RIGHT else -x / ys
    y = ys * (1.0 + u)
    sig = (params.alpha / params.beta) * np.expm1(-params.beta * np.log1p(u))
    bb = y * (1.0 - y) / params.h_days
    sbar = y * sig
    if side == LEFT:
        bb, sbar = -bb, -sbar
    return bb, sbar


def _log_rho_integrand(params, side):
    def f(y):
        bb, sb = shifted_coefficients(params, y, side)
        return 2.0 * bb / (sb * sb)
    return f


def _geometric_pieces(x, a, ratio=2.0):
    edges = [a]
    while edges[-1] / ratio > x:
        edges.append(edges[-1] / ratio)
    edges.append(x)
    return edges


def log_rho(params: ModelParams, x: float, a: float, side: str, epsrel: float = 1e-8) -> float:
    """``int_x^a 2 b̄/σ̄²`` by adaptive quadrature over geometric pieces."""
    _check_side(params, side)
    if not 0 < x <= a:
        raise ValidationError(f"need 0 < x <= a, got x={x}, a={a}")
    f = _log_rho_integrand(params, side)
    edges = _geometric_pieces(x, a)
    total = 0.0
    for hi, lo in zip(edges[:-1], edges[1:]):
        if hi == lo:
            continue
        val, err, info = _quad(f, lo, hi, epsrel=epsrel)
        if not math.isfinite(val) or err > max(1e-6 * abs(val), 1e-12) * 100:
            raise QuadratureError(f"quadrature failed on [{lo}, {hi}] (estimate {val}, error {err})")
        total += val
    return total


def rho(params: ModelParams, x: float, a: float, side: str) -> float:
    """``exp(int_x^a 2 b̄/σ̄²)``; may under- or overflow to 0 or inf."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_rho(params, x, a, side)))


def phi(params: ModelParams, x, side: str):
    """``(1 + |b̄(x)|)/σ̄²(x)``; x must be strictly positive."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("phi is singular at x = 0 and undefined for x < 0")
    bb, sb = shifted_coefficients(params, xa, side)
    out = (1.0 + np.abs(bb)) / (sb * sb)
    return float(out) if out.ndim == 0 else out


def k_constant(params: ModelParams) -> float:
    """``K = 2 y_sigma^(2β+1)(1 - y_sigma)/(h β² γ²)``: ``2b̄/σ̄² ~ K/x²`` on the right."""
    ys = params.y_sigma
    return 2.0 * ys ** (2 * params.beta + 1) * (1.0 - ys) / (params.h_days * params.beta ** 2 * params.gamma ** 2)


def log_rho_power(params: ModelParams, side: str = RIGHT) -> float:
    """Exponent q in ``rho(x) ~ C exp(±K/x) x^q`` as x -> 0.

    Obtained from the first-order expansion ``2b̄/σ̄² = (±K/x²)(1 + e1 x + ...)``
    with ``e1 = ±(β/y_sigma - 1/(1 - y_sigma))``; ``q = -(±K) e1``.
    Requires ``y_sigma != 1``.
    """
    _check_side(params, side)
    ys = params.y_sigma
    if ys == 1.0:
        raise DomainError("expansion degenerates at y_sigma == 1")
    k = k_constant(params)
    e1 = params.beta / ys - 1.0 / (1.0 - ys)
    if side == LEFT:
        k, e1 = -k, -e1
    return -k * e1


def default_radius(params: ModelParams) -> float:
    """Localisation radius ``min(y_sigma, 1)/2`` for probes at y_sigma."""
    return min(params.y_sigma, 1.0) / 2.0


def rho_tends_to(params: ModelParams, side: str) -> str:
    """Closed-form limit of rho at 0: the sign of the leading ``±K/x``."""
    _check_side(params, side)
    right_zero = params.y_sigma >= 1.0
    return TO_ZERO if right_zero == (side == RIGHT) else TO_INFINITY


def s_branch(params: ModelParams, side: str) -> str:
    """``"lower"`` for ``s = int_0^x rho``, ``"upper"`` for ``s = -int_x^a rho``."""
    return "lower" if rho_tends_to(params, side) == TO_ZERO else "upper"


# --------------------------------------------------------------- side profile

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _logexprel(d):
    # log((e^d - 1)/d), stable for all real d
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    small = np.abs(d) < 1e-8
    pos = (d > 0) & ~small
    neg = (d < 0) & ~small
    out[small] = d[small] / 2.0
    out[pos] = d[pos] + np.log(-np.expm1(-d[pos])) - np.log(d[pos])
    out[neg] = np.log(-np.expm1(d[neg])) - np.log(-d[neg])
    return out


class SideProfile:
    """Log-space table of rho, s and phi on a geometric grid in ``(0, a]``.

    Nodes ``x_i = a 2^(-i/cells_per_octave)``; ``log rho`` at the nodes comes
    from 8-point Gauss-Legendre per cell in ``t = log x``; integrals of
    ``exp(L)`` over a cell use the exact rule for ``L`` linear in ``t``.
    """

    def __init__(self, params: ModelParams, side: str, a: float | None = None, depth: int | None = None,
                 cells_per_octave: int = 128):
        _check_side(params, side)
        self.params, self.side = params, side
        self.a = default_radius(params) if a is None else float(a)
        if not 0 < self.a:
            raise ValidationError("a must be positive")
        if depth is None:
            k = abs(k_constant(params))
            depth = 40 if k == 0 else int(np.clip(math.ceil(math.log2(self.a * 400.0 / k)) + 6, 24, 80))
        self.depth = depth
        self.cpo = cells_per_octave
        n = depth * cells_per_octave
        self.t = math.log(self.a) - np.arange(n + 1) * (math.log(2.0) / cells_per_octave)
        self.x = np.exp(self.t)
        f = _log_rho_integrand(params, side)
        h = math.log(2.0) / cells_per_octave
        mid = self.t[:-1] - h / 2.0
        tq = mid[:, None] + (h / 2.0) * _GL_X[None, :]
        xq = np.exp(tq)
        cell = (h / 2.0) * np.sum(_GL_W[None, :] * f(xq) * xq, axis=1)
        # log rho(x_i) = sum of the cells between x_i and a
        self.log_rho = np.concatenate([[0.0], np.cumsum(cell)])
        bb, sb = shifted_coefficients(params, self.x, side)
        self.log_phi = np.log1p(np.abs(bb)) - 2.0 * np.log(np.abs(sb))
        self.h = h

    def _cell_logs(self, log_f):
        # log of int over each cell of f dx, with L = log f + t linear per cell
        L = log_f + self.t
        d = L[:-1] - L[1:]
        with np.errstate(invalid="ignore"):
            out = L[1:] + math.log(self.h) + _logexprel(np.where(np.isfinite(d), d, 0.0))
        # an endpoint at -inf (s vanishing at the innermost node): trapezoid
        edge = ~np.isfinite(d)
        out[edge] = math.log(self.h / 2.0) + np.logaddexp(L[:-1], L[1:])[edge]
        return out

    def _octave_logs(self, log_f):
        cells = self._cell_logs(log_f).reshape(self.depth, self.cpo)
        return np.logaddexp.reduce(cells, axis=1)

    def log_s_abs(self) -> np.ndarray:
        """``log |s|`` at the nodes for the branch the lemma table prescribes."""
        cells = self._cell_logs(self.log_rho)
        if s_branch(self.params, self.side) == "upper":
            return np.concatenate([[-np.inf], np.logaddexp.accumulate(cells)])
        # int_0^x rho: accumulate from the innermost node outwards (tail below
        # the last node is neglected; rho vanishes faster than any power there)
        rev = np.logaddexp.accumulate(cells[::-1])[::-1]
        return np.concatenate([rev, [-np.inf]])

    def probe(self, label: str, log_f) -> ProbeRecord:
        octs = self._octave_logs(log_f)
        eps = self.a * 2.0 ** -np.arange(1, self.depth + 1)
        return probe_from_logs(label, eps, octs[0], octs[1:])

    def rho_trend(self) -> TrendRecord:
        idx = np.arange(self.cpo, self.depth * self.cpo + 1, self.cpo)
        lr = self.log_rho[idx]
        d = np.diff(lr[-4:])
        if np.all(d < 0) and np.all(np.diff(d) <= 0):
            verdict = TO_ZERO
        elif np.all(d > 0) and np.all(np.diff(d) >= 0):
            verdict = TO_INFINITY
        else:
            verdict = INCONCLUSIVE
        return TrendRecord(f"rho_limit[{self.side}]", [float(v) for v in self.x[idx]],
                           [float(v) for v in lr], verdict)


def scale_s(params: ModelParams, x: float, a: float, side: str, branch: str | None = None,
            profile: SideProfile | None = None) -> float:
    """Scale function on ``(0, a]``.

    ``branch`` defaults to the one prescribed for this side and regime:
    ``"lower"`` (``int_0^x rho``, an epsilon-limit) or ``"upper"``
    (``-int_x^a rho``).  Requesting ``"lower"`` where ``int_0 rho`` diverges
    raises :class:`DivergenceError`.
    """
    _check_side(params, side)
    if not 0 < x <= a:
        raise ValidationError(f"need 0 < x <= a, got x={x}, a={a}")
    branch = s_branch(params, side) if branch is None else branch
    if branch == "upper":
        if x == a:
            return 0.0
        f = lambda y: rho(params, y, a, side)  # noqa: E731
        total = 0.0
        edges = _geometric_pieces(x, a)
        with np.errstate(over="ignore"):
            for hi, lo in zip(edges[:-1], edges[1:]):
                total += _quad(f, lo, hi, epsrel=1e-8)[0]
        return -total
    if branch != "lower":
        raise ValidationError("branch must be 'lower' or 'upper'")
    prof = profile if profile is not None else SideProfile(params, side, a=a)
    rec = prof.probe("rho", prof.log_rho)
    if rec.verdict != CONVERGES:
        raise DivergenceError(f"int_0^x rho does not converge on {side} (verdict {rec.verdict})")
    below = prof.x <= x
    xs, lr = prof.x[below], prof.log_rho[below]
    t = np.log(xs)
    L = lr + t
    d = L[:-1] - L[1:]
    cells = L[1:] + np.log(t[:-1] - t[1:]) + _logexprel(d)
    head = 0.0
    if xs[0] < x:
        head = _quad(lambda y: math.exp(log_rho(params, y, a, side)), xs[0], x, epsrel=1e-8)[0]
    with np.errstate(over="ignore"):
        return float(head + np.exp(np.logaddexp.reduce(cells))) if cells.size else head


def lemma_table(params: ModelParams, side: str, a: float | None = None, depth: int | None = None) -> dict:
    """Numerical verdicts for the four lemma quantities on one side.

    Keys: ``rho_limit`` (zero / infinity / inconclusive), ``int_rho``,
    ``int_phi_over_rho`` and ``int_phi_s``; the last is ``phi s`` where rho
    vanishes and ``phi |s| / rho`` where rho explodes.
    """
    prof = SideProfile(params, side, a=a, depth=depth)
    log_s = prof.log_s_abs()
    trend = prof.rho_trend()
    if rho_tends_to(params, side) == TO_ZERO:
        s_id, log_fs = "phi*s", prof.log_phi + log_s
    else:
        s_id, log_fs = "phi*|s|/rho", prof.log_phi + log_s - prof.log_rho
    return {
        "rho_limit": trend,
        "int_rho": prof.probe(f"rho[{side}]", prof.log_rho),
        "int_phi_over_rho": prof.probe(f"phi/rho[{side}]", prof.log_phi - prof.log_rho),
        "int_phi_s": prof.probe(f"{s_id}[{side}]", log_fs),
    }


def expected_lemma_table(params: ModelParams, side: str) -> dict:
    """Closed-form values of the lemma table for this side and regime."""
    if rho_tends_to(params, side) == TO_ZERO:
        return {"rho_limit": TO_ZERO, "int_rho": CONVERGES, "int_phi_over_rho": DIVERGES,
                "int_phi_s": CONVERGES}
    # the phi/rho cell is not stated where rho explodes; it converges since
    # 1/rho vanishes like exp(-|K|/x)
    return {"rho_limit": TO_INFINITY, "int_rho": DIVERGES, "int_phi_over_rho": CONVERGES,
            "int_phi_s": CONVERGES}


# ------------------------------------------------------------- classification

def origin_integrand(params: ModelParams):
    """``(1 + |b|)/σ̃²`` near the origin."""
    def f(y):
        st = sigma_tilde(params, y)
        return (1.0 + abs(drift_b(params, y))) / (st * st)
    return f


def classify(params: ModelParams, depth: int = 60) -> BoundaryReport:
    """Boundary types from the closed-form rules, checked against probes.

    The origin is regular iff ``beta > 1/2`` (type B0+, else B1+); around
    y_sigma the pair (left, right) is (B3-, B1+) when ``y_sigma >= 1`` and
    (B1-, B3+) otherwise.  A probe whose verdict is definite and opposite to
    the rule raises :class:`EvidenceContradiction`; inconclusive probes are
    attached without error.
    """
    if params.degenerate:
        raise DomainError("classification requires gamma > 0")
    ys = params.y_sigma
    regular = params.beta > 0.5
    if ys >= 1.0:
        left, right = "B3_minus", "B1_plus"
    else:
        left, right = "B1_minus", "B3_plus"
    report = BoundaryReport(regular, "B0_plus" if regular else "B1_plus", left, right, y_sigma=ys)

    contradictions = []
    origin = probe_integrability(origin_integrand(params), ys / 2.0, depth, label="origin:(1+|b|)/sigma_tilde^2")
    report.evidence.append(origin)
    if origin.verdict == (DIVERGES if regular else CONVERGES):
        contradictions.append(f"origin probe {origin.verdict} but beta={params.beta}")

    a = default_radius(params)
    for side in SIDES:
        sing = probe_integrability(lambda x, s=side: phi(params, x, s), a, depth, label=f"y_sigma:phi[{side}]")
        report.evidence.append(sing)
        if sing.verdict == CONVERGES:
            contradictions.append(f"y_sigma looks non-singular on {side}")
        trend = SideProfile(params, side, a=a).rho_trend()
        report.evidence.append(trend)
        want = rho_tends_to(params, side)
        if trend.verdict not in (want, INCONCLUSIVE):
            contradictions.append(f"rho tends to {trend.verdict} on {side}, rule says {want}")
    if contradictions:
        raise EvidenceContradiction("; ".join(contradictions))
    return report


def hitting_probability_mc(params: ModelParams, y0: float, level: float, horizon_steps: int,
                           cfg: EulerConfig, n_paths: int = 10_000) -> float:
    """Fraction of Euler paths whose running min (level below y0) or max
    (level above y0) reaches ``level`` within ``horizon_steps``.

    A discarded path has fallen below the threshold and counts as a hit
    whenever ``level`` lies above that threshold.
    """
    if level == y0:
        return 1.0
    if not level > 0:
        raise ValidationError("level must be positive")
    run = EulerConfig(cfg.dt_days, cfg.threshold_d, cfg.seed, horizon_steps, cfg.absorb,
                      cfg.zero_noise, cfg.workers, cfg.stream)
    ps = simulate_y(params, y0, run, n_paths)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if level < y0:
            hit = np.nanmin(ps.paths, axis=1) <= level
            hit |= (ps.discard_step >= 0) & (level > cfg.threshold_d)
        else:
            hit = np.nanmax(ps.paths, axis=1) >= level
    return float(np.mean(hit))
