"""Generator of Y, explicit finite-difference pricer and Monte Carlo cross-checks.

The generator and its adjoint are evaluated exactly as written, with the
drift per trading day and sigma annualised:

    (L f)(y)  = (1/h) y (1-y) f' + (1/2) y² σ²(y) f'',
    (L* f)(y) = -d/dy[(1/h) y (1-y) f] + (1/2) d²/dy²[y² σ²(y) f].

The pricing PDE is solved in time-to-maturity measured in trading days, so
the diffusion terms carry σ²/252 and the short rate ``r`` (annual) enters as
``r/252``; the cross term is ``s y σ² P_sy``:

    dP/dτ = r s P_s + ((1-y)/h + r) y P_y
            + (σ²/252) (s²/2 P_ss + s y P_sy + y²/2 P_yy) - r P.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, ValidationError
from .model import TRADING_DAYS, ModelParams, sigma_derivatives
from .simulator import EulerConfig, simulate_joint, simulate_y


def _sigma2_derivs(params, y):
    # a(y) = y^2 sigma^2 and its first two derivatives
    s0, s1, s2 = (np.asarray(v) for v in sigma_derivatives(params, y))
    a = y * y * s0 * s0
    a1 = 2 * y * s0 * s0 + 2 * y * y * s0 * s1
    a2 = 2 * s0 * s0 + 8 * y * s0 * s1 + 2 * y * y * (s1 * s1 + s0 * s2)
    return a, a1, a2


def _fd(f, y):
    # central differences with step 1e-5 max(1, y)
    y = np.asarray(y, dtype=float)
    e = 1e-5 * np.maximum(1.0, np.abs(y))
    fp, f0, fm = f(y + e), f(y), f(y - e)
    return f0, (fp - fm) / (2 * e), (fp - 2 * f0 + fm) / (e * e)


def _derivs(f, y, df, d2f):
    y = np.asarray(y, dtype=float)
    if df is None or d2f is None:
        return _fd(f, y)
    return f(y), df(y), d2f(y)


def generator_apply(params: ModelParams, f, y, df=None, d2f=None):
    """``(L f)(y)``; numerical derivatives unless ``df`` and ``d2f`` are given."""
    y = np.asarray(y, dtype=float)
    _, f1, f2 = _derivs(f, y, df, d2f)
    s0 = np.asarray(sigma_derivatives(params, y)[0])
    out = y * (1.0 - y) / params.h_days * f1 + 0.5 * y * y * s0 * s0 * f2
    return float(out) if out.ndim == 0 else out


def poisson_coefficients(params: ModelParams, y):
    """``(c2, c1, c0)`` with ``L* f = c2 f'' + c1 f' + c0 f``."""
    y = np.asarray(y, dtype=float)
    a, a1, a2 = _sigma2_derivs(params, y)
    m = y * (1.0 - y) / params.h_days
    m1 = (1.0 - 2.0 * y) / params.h_days
    return 0.5 * a, a1 - m, 0.5 * a2 - m1


def adjoint_apply(params: ModelParams, f, y, df=None, d2f=None):
    """``(L* f)(y)``.

    With analytic ``df``, ``d2f`` the product rule is applied exactly;
    otherwise the products ``b f`` and ``y² σ² f`` are differenced centrally.
    """
    y = np.asarray(y, dtype=float)
    if df is not None and d2f is not None:
        c2, c1, c0 = poisson_coefficients(params, y)
        out = c2 * d2f(y) + c1 * df(y) + c0 * f(y)
    else:
        h = params.h_days
        bf = lambda z: z * (1.0 - z) / h * f(z)  # noqa: E731
        af = lambda z: z * z * np.asarray(sigma_derivatives(params, z)[0]) ** 2 * f(z)  # noqa: E731
        out = -_fd(bf, y)[1] + 0.5 * _fd(af, y)[2]
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def poisson_residual(params: ModelParams, f, y, df=None, d2f=None):
    """Residual of the stationary equation ``L* f = 0`` (not solved here)."""
    return adjoint_apply(params, f, y, df, d2f)


# ------------------------------------------------------------------- pricing

@dataclass
class Grid2D:
    """Output (s, y) nodes, number of time steps and annual short rate.

    ``t_steps`` is a lower bound: the solver increases it to satisfy the
    explicit stability bound.  The solver's own nodes are log-spaced over
    the same box.
    """

    s_nodes: np.ndarray
    y_nodes: np.ndarray
    t_steps: int = 100
    rate_r: float = 0.0

    def __post_init__(self):
        self.s_nodes = np.asarray(self.s_nodes, dtype=float)
        self.y_nodes = np.asarray(self.y_nodes, dtype=float)
        for name, v in (("s_nodes", self.s_nodes), ("y_nodes", self.y_nodes)):
            if v.size < 4 or np.any(np.diff(v) <= 0) or v[0] <= 0:
                raise ValidationError(f"{name} must be >= 4 strictly increasing positive values")
        if self.t_steps < 1:
            raise ValidationError("t_steps must be positive")

    @classmethod
    def uniform(cls, s_range, y_range, ns, ny, params: ModelParams | None = None, t_steps=100, rate_r=0.0):
        """Uniform grid; y nodes are shifted by half a spacing if one hits y_sigma."""
        s = np.linspace(*s_range, ns)
        y = np.linspace(*y_range, ny)
        if params is not None and not params.degenerate:
            dy = y[1] - y[0]
            if np.min(np.abs(y - params.y_sigma)) < 1e-12 * max(1.0, params.y_sigma):
                y = y + dy / 2.0
        return cls(s, y, t_steps, rate_r)


@dataclass
class PriceSurface:
    s_nodes: np.ndarray
    y_nodes: np.ndarray
    values: np.ndarray
    maturity: float
    steps_used: int = 0

    def at(self, s: float, y: float) -> float:
        """Bilinear interpolation of the surface."""
        from scipy.interpolate import RegularGridInterpolator
        return float(RegularGridInterpolator((self.s_nodes, self.y_nodes), self.values)([[s, y]])[0])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "y", "price"])
            for i, s in enumerate(self.s_nodes):
                for j, y in enumerate(self.y_nodes):
                    w.writerow([repr(float(s)), repr(float(y)), repr(float(self.values[i, j]))])


def _log_grid(grid):
    # equal spacing in x = log s and z = log y, covering the requested box
    s, y = grid.s_nodes, grid.y_nodes
    lx, lz = math.log(s[-1] / s[0]), math.log(y[-1] / y[0])
    d = min(lx / (s.size - 1), lz / (y.size - 1))
    nx = int(math.ceil(lx / d - 1e-9)) + 1
    nz = int(math.ceil(lz / d - 1e-9)) + 1
    return math.log(s[0]) + d * np.arange(nx), math.log(y[0]) + d * np.arange(nz), d


def _coefficients(params, z, rate_r):
    y = np.exp(z)
    c = 0.5 * np.asarray(sigma_derivatives(params, y)[0]) ** 2 / TRADING_DAYS
    r = rate_r / TRADING_DAYS
    return c, r - c, (1.0 - y) / params.h_days, r


def _stable_dt(params, grid, safety=0.9):
    _, z, d = _log_grid(grid)
    c, mu, v, r = _coefficients(params, z, grid.rate_r)
    lam = 2 * c / d ** 2 + np.abs(mu) / d + np.abs(v) / d + abs(r)
    return safety / float(np.max(lam))


def _cell_average(payoff, S, Y, dx, k=16):
    # mean of H over the log-cell [x - dx/2, x + dx/2]
    off = np.exp(((np.arange(k) + 0.5) / k - 0.5) * dx)
    return np.mean([np.asarray(payoff(S * o, Y), dtype=float) * np.ones_like(S) for o in off], axis=0)


def pde_price(params: ModelParams, payoff, grid: Grid2D, maturity_days: float, max_refine: int = 3,
              smooth_payoff: bool = True) -> PriceSurface:
    """Explicit backward solve of the pricing PDE from ``H(s, y)`` at maturity.

    S and Y share one Brownian motion, so in ``x = log s``, ``z = log y`` the
    diffusion part is ``(σ²/2)(∂x + ∂z)²``, degenerate across the diagonal.
    The solver works on a grid with equal spacing in x and z, where that
    operator (cross term included) is a second difference along grid
    diagonals.  The equation becomes

        dP/dτ = (σ²/2) D² P + (r - σ²/2) D P + ((1-y)/h) ∂z P - r P,   D = ∂x + ∂z,

    with time in days and σ², r divided by 252.  The diagonal part has
    non-negative weights under the step bound; the transverse ∂z transport
    has no diffusion to absorb a centred difference, so it leaves dispersive
    undershoots of order 1e-9 on desk-scale grids.  Upwinding it instead
    would add first-order numerical diffusion comparable to σ² near y_sigma.
    The result is interpolated back to the requested nodes with cubic
    splines.

    With ``smooth_payoff`` the terminal values are cell averages of ``H`` in
    log s, which restores grid convergence for kinked or discontinuous payoffs.

    Boundaries: ``P_ss = 0`` at both s-edges (linear extrapolation in s) and
    ``P_yy = 0`` at the y-edges (linear ghost values in y).  The step count is
    raised to the stability bound; on blow-up it is doubled, at most
    ``max_refine`` times, before :class:`InstabilityError`.
    """
    if not maturity_days > 0:
        raise ValidationError("maturity must be positive")
    x, z, d = _log_grid(grid)
    S, Y = np.meshgrid(np.exp(x), np.exp(z), indexing="ij")
    if smooth_payoff:
        h0 = _cell_average(payoff, S, Y, d)
    else:
        h0 = np.asarray(payoff(S, Y), dtype=float) * np.ones_like(S)
    if not np.all(np.isfinite(h0)):
        raise ValidationError("payoff is not finite on the grid")
    steps = max(grid.t_steps, int(math.ceil(maturity_days / _stable_dt(params, grid))))
    for _ in range(max_refine + 1):
        out = _march(params, grid, x, z, d, h0, maturity_days, steps)
        if out is not None:
            from scipy.interpolate import RegularGridInterpolator
            si, yi = np.meshgrid(np.log(grid.s_nodes), np.log(grid.y_nodes), indexing="ij")
            pts = np.stack([np.minimum(si, x[-1]), np.minimum(yi, z[-1])], axis=-1)
            vals = RegularGridInterpolator((x, z), out, method="cubic")(pts)
            return PriceSurface(grid.s_nodes, grid.y_nodes, vals, maturity_days, steps)
        steps *= 2
    raise InstabilityError(f"explicit scheme unstable after {max_refine} refinements ({steps // 2} steps)")


def _march(params, grid, x, z, d, h0, maturity, steps):
    c, mu, v, r = (np.broadcast_to(a, z.shape) for a in _coefficients(params, z, grid.rate_r))
    # central first difference along the diagonal unless the cell Peclet number is too large
    central = np.abs(mu) * d <= 2 * c
    fwd_d, bwd_d = np.where(central, 0.0, np.maximum(mu, 0.0)), np.where(central, 0.0, np.minimum(mu, 0.0))
    cen_d = np.where(central, mu, 0.0)
    y = np.exp(z)
    # linear ghost values in y below and above the z range
    yl, yh = y[0] * math.exp(-d), y[-1] * math.exp(d)
    wl, wh = (y[0] - yl) / (y[1] - y[0]), (yh - y[-1]) / (y[-1] - y[-2])
    s = np.exp(x)
    el, eh = (s[0] - s[1]) / (s[1] - s[2]), (s[-1] - s[-2]) / (s[-2] - s[-3])
    dt = maturity / steps
    p = h0.copy()
    scale = max(1.0, float(np.max(np.abs(h0))))
    for _ in range(steps):
        q = np.empty((p.shape[0], p.shape[1] + 2))
        q[:, 1:-1] = p
        q[:, 0] = p[:, 0] + wl * (p[:, 0] - p[:, 1])
        q[:, -1] = p[:, -1] + wh * (p[:, -1] - p[:, -2])
        mid = q[1:-1, 1:-1]
        up, dn = q[2:, 2:], q[:-2, :-2]
        lap = (up - 2 * mid + dn) / d ** 2
        grad = cen_d * (up - dn) / (2 * d) + fwd_d * (up - mid) / d + bwd_d * (mid - dn) / d
        gz = v * (q[1:-1, 2:] - q[1:-1, :-2]) / (2 * d)
        new = p.copy()
        new[1:-1] = mid + dt * (c * lap + grad + gz - r * mid)
        new[0] = new[1] + el * (new[1] - new[2])
        new[-1] = new[-2] + eh * (new[-2] - new[-3])
        p = new
        if not np.all(np.isfinite(p)) or np.max(np.abs(p)) > 1e6 * scale:
            return None
    return p


def mc_price(params: ModelParams, payoff, s0: float, y0: float, maturity_days: float, cfg: EulerConfig,
             n_paths: int = 100_000, rate_r: float = 0.0):
    """Discounted Monte Carlo price and 95% normal half-width.

    The joint Euler scheme runs with ``cfg.dt_days`` steps up to maturity;
    with ``rate_r != 0`` both S and Y receive the drift ``r dt``.  Discarded
    paths are excluded.
    """
    steps = int(round(maturity_days / cfg.dt_days))
    if steps < 1 or abs(steps * cfg.dt_days - maturity_days) > 1e-9 * maturity_days:
        raise ValidationError("maturity must be a whole number of Euler steps")
    run = EulerConfig(cfg.dt_days, cfg.threshold_d, cfg.seed, steps, cfg.absorb, cfg.zero_noise,
                      cfg.workers, cfg.stream)
    s_paths, ys = simulate_joint(params, s0, y0, run, n_paths, rate=rate_r)
    keep = ys.surviving
    if keep.size == 0:
        from .errors import AllPathsDiscarded
        raise AllPathsDiscarded("every pricing path was discarded")
    vals = np.asarray(payoff(s_paths[keep, -1], ys.paths[keep, -1]), dtype=float) * np.ones(keep.size)
    disc = math.exp(-rate_r * maturity_days / TRADING_DAYS)
    price = disc * float(np.mean(vals))
    spread = keep.size > 1 and np.ptp(vals) > 0
    half = 1.96 * disc * float(np.std(vals, ddof=1)) / math.sqrt(keep.size) if spread else 0.0
    return price, half


def black_scholes_call(s: float, k: float, vol: float, maturity_days: float, rate_r: float = 0.0) -> float:
    from scipy.stats import norm
    t = maturity_days / TRADING_DAYS
    sd = vol * math.sqrt(t)
    d1 = (math.log(s / k) + rate_r * t) / sd + 0.5 * sd
    return s * norm.cdf(d1) - k * math.exp(-rate_r * t) * norm.cdf(d1 - sd)


# --------------------------------------------------------------- stationary

@dataclass
class Histogram:
    edges: np.ndarray
    mass: np.ndarray
    mean: float
    adjoint_residual: float

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def mode(self) -> float:
        return float(self.centres[int(np.argmax(self.mass))])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "mass"])
            for lo, hi, m in zip(self.edges[:-1], self.edges[1:], self.mass):
                w.writerow([repr(float(lo)), repr(float(hi)), repr(float(m))])


def stationary_estimate(params: ModelParams, y0: float, horizon: int, cfg: EulerConfig,
                        bin_width: float = 0.01, y_max: float | None = None) -> Histogram:
    """Occupation-time histogram of one long trajectory of Y on ``[0, y_max]``.

    ``adjoint_residual`` is ``int |L* p|`` for a smoothed density ``p`` built
    from the histogram; it is a diagnostic only.
    """
    if horizon < 100_000:
        raise ValidationError("stationary estimates need at least 1e5 steps")
    run = EulerConfig(cfg.dt_days, cfg.threshold_d, cfg.seed, horizon, cfg.absorb, cfg.zero_noise, 1, cfg.stream)
    ps = simulate_y(params, y0, run, 1)
    path = ps.paths[0]
    path = path[np.isfinite(path)]
    top = float(np.max(path)) if y_max is None else float(y_max)
    nb = max(1, int(math.ceil(top / bin_width)))
    edges = np.arange(nb + 1) * bin_width
    counts, _ = np.histogram(np.clip(path, 0.0, edges[-1]), bins=edges)
    mass = counts / counts.sum()
    dens = np.convolve(mass / bin_width, np.ones(5) / 5.0, mode="same")
    c = 0.5 * (edges[1:] + edges[:-1])
    ok = c > 0
    c2, c1, c0 = poisson_coefficients(params, c[ok])
    d1 = np.gradient(dens, bin_width)[ok]
    d2 = np.gradient(np.gradient(dens, bin_width), bin_width)[ok]
    resid = float(np.sum(np.abs(c2 * d2 + c1 * d1 + c0 * dens[ok])) * bin_width)
    return Histogram(edges, mass, float(np.mean(path)), resid)
