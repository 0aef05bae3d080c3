"""Synthetic market data shared by calibration, CLI and acceptance tests."""
import datetime as dt

import numpy as np

from pdvol.calibration import CalibrationProblem
from pdvol.market import PriceSeries, reconstruct_y
from pdvol.model import ModelParams
from pdvol.simulator import EulerConfig
from pdvol.vix import VixConfig

TRUTH = (0.9, 1.5, 0.8)
START = (1.0, 1.4, 0.9)


def synthetic_spx(n=500):
    t = np.arange(n)
    vals = 100.0 * np.exp(0.25 * np.sin(2 * np.pi * t / 160.0))
    dates = tuple(dt.date(2010, 1, 4) + dt.timedelta(days=int(i)) for i in t)
    return PriceSeries(dates, vals)


def synthetic_market(truth=TRUTH, h=180.0, n_dates=10, vix_cfg=None, spx=None):
    """Market VIX produced by the model itself at ``truth`` under the calibration noise."""
    spx = synthetic_spx() if spx is None else spx
    vix_cfg = VixConfig(100, 100, 30.0, EulerConfig(seed=7)) if vix_cfg is None else vix_cfg
    ys = reconstruct_y(spx, h)
    idx = np.linspace(250, len(spx) - 2, n_dates).astype(int)
    dates = tuple(ys.dates[i - 1] for i in idx)
    placeholder = PriceSeries(dates, np.ones(len(dates)))
    prob = CalibrationProblem(placeholder, spx, h, truth, vix_cfg)
    return spx, PriceSeries(dates, prob.model_vix(truth)), vix_cfg


def synthetic_problem(start=START, budget=200, **kw):
    spx, market, cfg = synthetic_market(**{k: v for k, v in kw.items() if k in ("truth", "h", "n_dates")})
    extra = {k: v for k, v in kw.items() if k not in ("truth", "h", "n_dates")}
    return CalibrationProblem(market, spx, kw.get("h", 180.0), start, cfg, budget=budget, **extra)


def write_series(series, path, header="date,close"):
    lines = [header] + [f"{d.isoformat()},{float(v)!r}" for d, v in zip(series.dates, series.values)]
    path.write_text("\n".join(lines) + "\n")
    return path
