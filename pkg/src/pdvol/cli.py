"""Batch command line: ``pdvol <command> [--config FILE] [--set key=value ...] [--out DIR]``.

Exit codes: 0 success, 1 numerical failure, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys

import numpy as np

from .errors import ConfigError, InputError, NumericalError
from .model import ModelParams

# key -> (type, default); every key mirrors one module config field
SCHEMA = {
    # model
    "alpha": (float, 0.9), "beta": (float, 1.5), "gamma": (float, 0.8), "h": (float, 30.0),
    # Euler scheme
    "seed": (int, 0), "steps": (int, 252), "dt_days": (float, 1.0), "threshold_d": (float, 0.0),
    "absorb": (bool, False), "zero_noise": (bool, False), "workers": (int, 1), "stream": (int, 0),
    "n_paths": (int, 10), "y0": (float, 1.0), "s0": (float, 1.0),
    # market data
    "spx_file": (str, ""), "vix_file": (str, ""), "x_file": (str, ""), "y_file": (str, ""),
    "window_start": (str, ""), "window_end": (str, ""),
    # VIX estimator
    "n_inner": (int, 100), "m_paths": (int, 100), "delta_days": (float, 30.0),
    # calibration
    "alpha0": (float, 1.0), "beta0": (float, 1.0), "gamma0": (float, 1.0),
    "alpha_lo": (float, 0.01), "alpha_hi": (float, 20.0), "beta_lo": (float, 0.1), "beta_hi": (float, 12.0),
    "gamma_lo": (float, 0.01), "gamma_hi": (float, 20.0),
    "budget": (int, 200), "stride": (int, 1), "policy": (str, "fail"),
    # boundary classification
    "depth": (int, 60),
    # rates and smile
    "strikes": (list, [-0.2, -0.1, -0.05, 0.05, 0.1, 0.2]), "x0": (float, 0.0),
    "ldp_n": (int, 100), "restarts": (int, 2),
    # pricing
    "payoff": (str, "call"), "strike": (float, 1.0), "maturity_days": (float, 30.0), "rate_r": (float, 0.0),
    "s_min": (float, 0.4), "s_max": (float, 1.6), "y_min": (float, 0.75), "y_max": (float, 1.25),
    "ns": (int, 121), "ny": (int, 41), "t_steps": (int, 100), "mc_paths": (int, 0), "mc_dt_days": (float, 0.25),
}


def _convert(key, raw):
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key '{key}'")
    typ = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is list:
            return [float(v) for v in raw.replace(",", " ").split()]
        if typ is int:
            return int(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"bad value for '{key}': {raw!r}") from None


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then ``key = value`` lines of ``path``, then ``--set`` overrides."""
    cfg = {k: v[1] for k, v in SCHEMA.items()}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for n, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{n}: expected 'key = value'")
                k, v = line.split("=", 1)
                cfg[k.strip()] = _convert(k.strip(), v)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip()] = _convert(k.strip(), v)
    return cfg


def _params(c) -> ModelParams:
    return ModelParams(c["alpha"], c["beta"], c["gamma"], c["h"])


def _euler(c, **kw):
    from .simulator import EulerConfig
    base = dict(dt_days=c["dt_days"], threshold_d=c["threshold_d"], seed=c["seed"], steps=c["steps"],
                absorb=c["absorb"], zero_noise=c["zero_noise"], workers=c["workers"], stream=c["stream"])
    base.update(kw)
    return EulerConfig(**base)


def _vix_cfg(c):
    from .vix import VixConfig
    return VixConfig(c["n_inner"], c["m_paths"], c["delta_days"], _euler(c))


def _series(c, key):
    from .market import load_csv
    path = c[key]
    if not path:
        raise ConfigError(f"'{key}' is required")
    if not os.path.exists(path):
        raise ConfigError(f"input file not found: {path}")
    return load_csv(path)


def _date(c, key, default):
    if not c[key]:
        return default
    try:
        return dt.date.fromisoformat(c[key])
    except ValueError:
        raise ConfigError(f"bad date for '{key}': {c[key]!r}") from None


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands

def cmd_simulate(c, out) -> int:
    from .simulator import simulate_y, write_paths_csv
    from .svg import line_svg
    ps = simulate_y(_params(c), c["y0"], _euler(c), c["n_paths"])
    write_paths_csv(ps, os.path.join(out, "paths.csv"))
    steps = np.arange(ps.paths.shape[1])
    line_svg([(steps, row) for row in ps.paths[:8]], os.path.join(out, "paths.svg"),
             title="Y paths", xlabel="step", ylabel="Y")
    if ps.discarded:
        print(f"{len(ps.discarded)} of {c['n_paths']} paths discarded", file=sys.stderr)
    return 0


def cmd_vix(c, out) -> int:
    from .market import reconstruct_y, write_series_csv
    from .svg import line_svg
    from .vix import vix_track
    p = _params(c)
    spx = _series(c, "spx_file")
    ys = reconstruct_y(spx, p.h_days)
    window = (_date(c, "window_start", ys.dates[0]), _date(c, "window_end", ys.dates[-1]))
    track = vix_track(p, spx, window, _vix_cfg(c), y_series=ys)
    track.write_csv(os.path.join(out, "vix.csv"))
    series = [(np.arange(len(track.dates)), track.vix_hat)]
    if c["vix_file"]:
        hist = _series(c, "vix_file").slice_dates(*window)
        write_series_csv(hist, os.path.join(out, "vix_history.csv"), header=("date", "vix"))
        pos = {d: i for i, d in enumerate(track.dates)}
        series.append((np.array([pos.get(d, np.nan) for d in hist.dates], dtype=float), hist.values))
    line_svg(series, os.path.join(out, "vix.svg"), title="simulated and historical VIX",
             xlabel="date index", ylabel="VIX")
    for d in track.flagged:
        print(f"all inner paths discarded on {d.isoformat()}", file=sys.stderr)
    return 0


def cmd_calibrate(c, out) -> int:
    from .calibration import CalibrationProblem, best_so_far, calibrate
    from .svg import line_svg
    bounds = ((c["alpha_lo"], c["alpha_hi"]), (c["beta_lo"], c["beta_hi"]), (c["gamma_lo"], c["gamma_hi"]))
    prob = CalibrationProblem(_series(c, "vix_file"), _series(c, "spx_file"), c["h"],
                              (c["alpha0"], c["beta0"], c["gamma0"]), _vix_cfg(c), bounds,
                              c["budget"], c["stride"], c["policy"], c["workers"])
    res = calibrate(prob)
    _dump(res.to_json(), os.path.join(out, "calibration.json"))
    best = best_so_far(res.trace)
    line_svg([(np.arange(1, best.size + 1), np.log10(np.maximum(best, 1e-300)))],
             os.path.join(out, "calibration.svg"), title="best LSE", xlabel="evaluation", ylabel="log10 LSE")
    if res.budget_exhausted:
        print(f"budget of {c['budget']} evaluations exhausted", file=sys.stderr)
    return 0


def cmd_classify(c, out) -> int:
    from .boundary import classify
    rep = classify(_params(c), depth=c["depth"])
    _dump(rep.to_json(), os.path.join(out, "boundary.json"))
    return 0


def cmd_smile(c, out) -> int:
    from .ldp import smile_asymptote, write_smile_csv
    from .svg import line_svg
    ks = sorted(c["strikes"])
    sig, flags = smile_asymptote(_params(c), c["x0"], c["y0"], ks, n=c["ldp_n"], restarts=c["restarts"],
                                 seed=c["seed"])
    write_smile_csv(ks, sig, flags, os.path.join(out, "smile.csv"))
    line_svg([(ks, sig)], os.path.join(out, "smile.svg"), title="small-time implied volatility",
             xlabel="log-strike", ylabel="sigma")
    return 0


def cmd_regress(c, out) -> int:
    from .market import regress
    from .svg import scatter_svg
    x, y = _series(c, "x_file"), _series(c, "y_file")
    fit = regress(x, y)
    _dump(fit.to_json(), os.path.join(out, "regression.json"))
    pos = {d: i for i, d in enumerate(y.dates)}
    pairs = [(v, y.values[pos[d]]) for d, v in zip(x.dates, x.values) if d in pos]
    scatter_svg([a for a, _ in pairs], [b for _, b in pairs], os.path.join(out, "regression.svg"),
                title="regression", xlabel="x", ylabel="y", line=(fit.slope, fit.intercept))
    print(f"joined {fit.n_used} dates, dropped {fit.n_dropped}", file=sys.stderr)
    return 0


PAYOFFS = {
    "call": lambda k: (lambda s, y: np.maximum(s - k, 0.0)),
    "put": lambda k: (lambda s, y: np.maximum(k - s, 0.0)),
    "digital": lambda k: (lambda s, y: (s > k).astype(float)),
    "forward": lambda k: (lambda s, y: s - k),
}


def cmd_price(c, out) -> int:
    from .pde import Grid2D, mc_price, pde_price
    p = _params(c)
    if c["payoff"] not in PAYOFFS:
        raise ConfigError(f"payoff must be one of {sorted(PAYOFFS)}")
    h = PAYOFFS[c["payoff"]](c["strike"])
    grid = Grid2D.uniform((c["s_min"], c["s_max"]), (c["y_min"], c["y_max"]), c["ns"], c["ny"], p,
                          c["t_steps"], c["rate_r"])
    surf = pde_price(p, h, grid, c["maturity_days"])
    surf.write_csv(os.path.join(out, "surface.csv"))
    res = {"payoff": c["payoff"], "strike": c["strike"], "maturity_days": c["maturity_days"],
           "s0": c["s0"], "y0": c["y0"], "pde_price": surf.at(c["s0"], c["y0"]), "time_steps": surf.steps_used}
    if c["mc_paths"] > 0:
        price, half = mc_price(p, h, c["s0"], c["y0"], c["maturity_days"], _euler(c, dt_days=c["mc_dt_days"]),
                               c["mc_paths"], c["rate_r"])
        res.update(mc_price=price, mc_ci_halfwidth=half)
    _dump(res, os.path.join(out, "price.json"))
    return 0


COMMANDS = {"simulate": cmd_simulate, "vix": cmd_vix, "calibrate": cmd_calibrate, "classify": cmd_classify,
            "smile": cmd_smile, "regress": cmd_regress, "price": cmd_price}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pdvol", description="path-dependent volatility toolkit")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat 'key = value' file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    ap.add_argument("--out", default=".", help="output directory")
    args = ap.parse_args(argv)
    try:
        c = load_config(args.config, args.set)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](c, args.out)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
